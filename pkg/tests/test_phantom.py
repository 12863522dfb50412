import json

import numpy as np
import pytest

from toothbox.phantom import (BONE_DENSITY, TOOTH_DENSITY, GroundTruth, PhantomSpec, PhantomSpecError,
                              ToothSpec, generate_phantom, random_phantom_spec, render_phantom)


def one_tooth_spec(**kw):
    t = ToothSpec(6, (10.0, 10.0), 3.0, 2.4, 10.0)
    base = dict(dims=(40, 40, 60), spacing=(0.5, 0.5, 0.5), maxilla=(t,), gap_mm=2.0, rami=False)
    base.update(kw)
    return PhantomSpec(**base)


def test_empty_spec_gives_uniform_background():
    vol, gt = generate_phantom(PhantomSpec(dims=(8, 8, 8), background=5))
    assert (vol.data == 5).all()
    assert gt.teeth == ()


def test_single_tooth_vertical_extent():
    _, gt = generate_phantom(one_tooth_spec())
    (t,) = gt.teeth
    assert abs((t.hi[2] - t.lo[2]) - 20) <= 1


def test_negative_gap_overlaps_in_z():
    t = ToothSpec(6, (10.0, 10.0), 3.0, 2.4, 10.0)
    _, gt = generate_phantom(one_tooth_spec(mandible=(t,), gap_mm=-2.0))
    up = next(b for b in gt.teeth if b.arch == "upper")
    low = next(b for b in gt.teeth if b.arch == "lower")
    assert up.hi[2] > low.lo[2]


def test_ground_truth_tightness(phantom_factory):
    ph = phantom_factory(4)
    for t in ph.ground_truth.teeth:
        region, solid = ph.masks[t.id]
        full = np.zeros(ph.labels.shape, dtype=bool)
        full[region] = solid
        inside = full[t.lo[2]:t.hi[2], t.lo[1]:t.hi[1], t.lo[0]:t.hi[0]]
        assert inside.sum() == solid.sum()
        # every face touches the solid, so no face can move inwards
        assert inside[0].any() and inside[-1].any()
        assert inside[:, 0].any() and inside[:, -1].any()
        assert inside[:, :, 0].any() and inside[:, :, -1].any()
        assert (ph.volume.data[full] >= TOOTH_DENSITY - 1).all()


def test_sections_inside_box(phantom_factory):
    for t in phantom_factory(5).ground_truth.teeth:
        for z, (x0, y0, x1, y1) in t.footprint.items():
            assert t.lo[2] <= z < t.hi[2]
            assert t.lo[0] <= x0 < x1 <= t.hi[0] and t.lo[1] <= y0 < y1 <= t.hi[1]


def test_density_levels(phantom_factory):
    ph = phantom_factory(6)
    values = set(np.unique(ph.volume.data).tolist())
    assert values <= {0, BONE_DENSITY, TOOTH_DENSITY}
    # density increases from air to bone to tooth
    assert 0 < BONE_DENSITY < TOOTH_DENSITY


def test_determinism():
    spec = random_phantom_spec(11, noise=20.0)
    a, b = render_phantom(spec), render_phantom(spec)
    assert a.volume == b.volume
    assert a.ground_truth.to_dict() == b.ground_truth.to_dict()


def test_validation_errors():
    t = ToothSpec(9, (10.0, 10.0), 3.0, 2.4, 10.0)
    with pytest.raises(PhantomSpecError):
        one_tooth_spec(maxilla=(t,)).validate()
    far = ToothSpec(3, (100.0, 10.0), 3.0, 2.4, 10.0)
    with pytest.raises(PhantomSpecError):
        one_tooth_spec(maxilla=(far,)).validate()
    with pytest.raises(PhantomSpecError):
        one_tooth_spec(gap_mm=-1.0).validate()  # nothing to overlap with
    many = tuple(ToothSpec(1, (10.0, 10.0), 1.0, 1.0, 5.0) for _ in range(17))
    with pytest.raises(PhantomSpecError):
        one_tooth_spec(maxilla=many).validate()


def test_json_round_trips(tmp_path):
    spec = random_phantom_spec(3)
    assert PhantomSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    gt = render_phantom(spec).ground_truth
    back = GroundTruth.from_dict(json.loads(json.dumps(gt.to_dict())))
    assert back.to_dict() == gt.to_dict()
    with pytest.raises(Exception):
        PhantomSpec.from_dict({**spec.to_dict(), "bogus": 1})


@pytest.mark.parametrize("seed", range(8))
def test_random_specs_are_valid(seed):
    spec = random_phantom_spec(seed)
    n = len(spec.maxilla) + len(spec.mandible)
    assert 8 <= n <= 28
    assert 2.0 <= spec.gap_mm <= 3.5


def test_symmetric_fdi_mirror():
    gt = render_phantom(random_phantom_spec(2, n_teeth=20, symmetric=True)).ground_truth
    codes = sorted(t.fdi for t in gt.teeth)
    right = sorted(c % 10 for c in codes if c // 10 in (1, 4))
    left = sorted(c % 10 for c in codes if c // 10 in (2, 3))
    assert right == left
