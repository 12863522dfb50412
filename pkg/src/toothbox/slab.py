"""Selection of the tooth-bearing slab and equispaced axial sampling."""

from __future__ import annotations

import numpy as np


def axial_mean_profile(vol) -> np.ndarray:
    """Mean density of every axial slice, indexed by z."""
    return vol.data.reshape(vol.data.shape[0], -1).mean(axis=1, dtype=np.float64)


def select_tooth_slab(profile, fraction=0.9):
    """Maximal contiguous window around the profile peak above the range threshold.

    The threshold keeps the top ``fraction`` of the min-max range of the
    profile: ``T = v_min + (1 - fraction) * (v_max - v_min)``. A flat profile
    returns the full range.
    """
    v = np.asarray(profile, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("profile must be a non-empty 1D sequence")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    vmin, vmax = v.min(), v.max()
    if vmax == vmin:
        return 0, v.size - 1
    threshold = vmin + (1.0 - fraction) * (vmax - vmin)
    peak = int(np.argmax(v))
    above = v >= threshold
    lo = peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = peak
    while hi < v.size - 1 and above[hi + 1]:
        hi += 1
    return lo, hi


def slice_step(sz, interval_mm=1.4) -> int:
    if interval_mm <= 0:
        raise ValueError("interval_mm must be positive")
    return max(1, int(round(interval_mm / sz)))


def sample_slices(slab, sz, interval_mm=1.4):
    z_lo, z_hi = slab
    return list(range(int(z_lo), int(z_hi) + 1, slice_step(sz, interval_mm)))
