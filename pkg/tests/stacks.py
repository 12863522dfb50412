"""Random detection stacks and a checker for the reconstruction lifecycle rules."""

import numpy as np

from toothbox.detections import Detection2D
from toothbox.reconstruction import MatchConfig, reconstruct


def random_stack(rng, n_slices=None, n_tracks=None, step=1):
    n_slices = int(rng.integers(3, 16)) if n_slices is None else n_slices
    n_tracks = int(rng.integers(1, 7)) if n_tracks is None else n_tracks
    slices = list(range(0, n_slices * step, step))
    dets = {}
    for _ in range(n_tracks):
        x, y = rng.uniform(0, 60, 2)
        w, h = rng.uniform(3, 10, 2)
        label = int(rng.integers(1, 9))
        start = int(rng.integers(0, n_slices))
        stop = int(rng.integers(start, n_slices)) + 1
        for z in slices[start:stop]:
            if rng.random() < 0.25:
                continue
            x += rng.normal(0, 0.8)
            y += rng.normal(0, 0.8)
            lab = label if rng.random() > 0.2 else int(rng.integers(1, 9))
            box = (int(x), int(y), int(x + w) + 1, int(y + h) + 1)
            dets.setdefault(z, []).append(Detection2D(z, box, lab))
    for z in slices:
        for _ in range(rng.poisson(0.3)):
            x, y = rng.uniform(0, 60, 2)
            dets.setdefault(z, []).append(Detection2D(z, (int(x), int(y), int(x) + 4, int(y) + 4),
                                                      int(rng.integers(1, 9))))
    return dets, slices


def shuffled(dets, rng):
    return {z: [v[i] for i in rng.permutation(len(v))] for z, v in dets.items()}


def lifecycle_violations(dets, slices, spacing_z=0.5, cfg=MatchConfig(), rng=None):
    """List of broken rules for one stack (empty when every rule holds)."""
    out = []
    step = slices[1] - slices[0] if len(slices) > 1 else 1
    every = reconstruct(dets, slices, spacing_z, cfg, keep_invalid=True)
    kept = reconstruct(dets, slices, spacing_z, cfg)
    # single consumption: each detection lands in exactly one volume
    used = sorted((z, box, lab) for t in every for z, box, lab in t.matches)
    given = sorted((d.slice_index, d.box, d.label) for v in dets.values() for d in v)
    if used != given:
        out.append("consumption")
    for t in every:
        zs = [m[0] for m in t.matches]
        if len(set(zs)) != len(zs) or zs != sorted(zs):
            out.append("one-per-slice")
        # at most max_skipped_slices empty sampled slices between two matches
        if any((b - a) // step - 1 > cfg.max_skipped_slices for a, b in zip(zs, zs[1:])):
            out.append("skip-closure")
    if any(len(t.matches) < cfg.min_detections for t in kept):
        out.append("min-detections")
    if sum(len(t.matches) >= cfg.min_detections and
           (t.last_slice - t.first_slice + step) * spacing_z >= cfg.min_height_mm for t in every) != len(kept):
        out.append("validity-filter")
    if rng is not None:
        again = reconstruct(shuffled(dets, rng), slices, spacing_z, cfg)
        if [(t.matches, t.final_label) for t in again] != [(t.matches, t.final_label) for t in kept]:
            out.append("permutation")
    return out
