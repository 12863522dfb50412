import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import slice_means
from toothbox.slab import axial_mean_profile, sample_slices, select_tooth_slab, slice_step
from toothbox.volume import VoxelVolume


def test_profile_constant_and_identity():
    vol = VoxelVolume(np.full((4, 3, 2), 7, dtype=np.int16), (1.0, 1.0, 1.0))
    assert np.allclose(axial_mean_profile(vol), 7.0)
    vol = VoxelVolume(np.array([0, 10, 20], dtype=np.int16).reshape(3, 1, 1), (1.0, 1.0, 1.0))
    assert axial_mean_profile(vol).tolist() == [0.0, 10.0, 20.0]


def test_profile_matches_direct_sum(phantom_factory):
    vol = phantom_factory(1, spacing=1.2).volume
    assert np.allclose(axial_mean_profile(vol), slice_means(vol.data))


def test_select_examples():
    assert select_tooth_slab([0, 10, 0], 0.9) == (1, 1)
    assert select_tooth_slab([3, 3, 3, 3]) == (0, 3)
    with pytest.raises(ValueError):
        select_tooth_slab([1, 2], 0.0)
    with pytest.raises(ValueError):
        select_tooth_slab([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=40), st.floats(0.05, 1.0))
def test_window_is_maximal(values, fraction):
    lo, hi = select_tooth_slab(values, fraction)
    v = np.asarray(values, dtype=float)
    thr = v.min() + (1 - fraction) * (v.max() - v.min())
    assert lo <= int(np.argmax(v)) <= hi
    if v.max() > v.min():
        assert (v[lo:hi + 1] >= thr).all()
        assert lo == 0 or v[lo - 1] < thr
        assert hi == v.size - 1 or v[hi + 1] < thr


def test_slab_covers_phantom_teeth(phantom_factory):
    for seed in range(5):
        ph = phantom_factory(seed)
        lo, hi = select_tooth_slab(axial_mean_profile(ph.volume))
        for t in ph.ground_truth.teeth:
            # every slice inside the crown-to-crown window is kept
            assert lo <= t.hi[2] - 1 and t.lo[2] <= hi


def test_sampling_examples():
    assert sample_slices((0, 9), 0.7) == [0, 2, 4, 6, 8]
    assert sample_slices((5, 5), 0.3) == [5]
    assert slice_step(2.0) == 1
    with pytest.raises(ValueError):
        slice_step(0.5, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 80), st.floats(0.1, 2.0))
def test_sampling_density(z_lo, length, sz):
    s = sample_slices((z_lo, z_lo + length), sz)
    step = slice_step(sz)
    assert s[0] == z_lo and s[-1] <= z_lo + length
    assert all(b - a == step for a, b in zip(s, s[1:]))
    # a tooth of 4.2 mm is cut by at least three sampled slices
    extent = int(np.ceil(4.2 / sz))
    if step * sz <= 1.4 + 1e-9 and extent <= length:
        for start in range(z_lo, z_lo + length - extent + 2):
            hits = [z for z in s if start <= z < start + extent]
            if start + extent - 1 <= s[-1]:
                assert len(hits) >= 3
