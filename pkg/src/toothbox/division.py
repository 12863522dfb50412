"""Division of fused upper/lower tooth volumes along a minimum-cost seam surface.

Oversized volumes are flagged by vertical extent. For each flagged box an
expected split height is read off the vertical density profile, then every
sagittal slice of the box gets a seam z(y) by dynamic programming over a
central band; slices are processed left to right with the previous seam as a
prior, and the seams together form the division lattice.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box3D

# relative depth a profile valley needs before it overrides the midpoint prior
VALLEY_MIN_DEPTH = 0.05


class DivisionError(ValueError):
    """Division refused; ``kind`` is ``"empty_band"`` or ``"irreducible"``."""

    def __init__(self, message, kind):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class DivisionConfig:
    size_flag_factor: float = 1.6
    band_fraction: float = 0.6
    density_weight: float = 1.0
    midline_weight: float = 0.25
    smoothness_weight: float = 0.05
    inter_slice_weight: float = 0.1
    inter_slice_step: int = 2

    def __post_init__(self):
        if not self.size_flag_factor > 1:
            raise ValueError("size_flag_factor must be > 1")
        if not 0 < self.band_fraction <= 1:
            raise ValueError("band_fraction must be in (0, 1]")
        for name in ("density_weight", "midline_weight", "smoothness_weight", "inter_slice_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.inter_slice_step < 0:
            raise ValueError("inter_slice_step must be >= 0")


@dataclass
class DivisionSurface:
    """Seam heights over a box footprint: ``z[i, j]`` at x = x0 + i, y = y0 + j.

    A voxel (x, y, z) lies on the upper side when z < z(x, y).
    """

    x0: int
    y0: int
    z: np.ndarray
    band: tuple  # (lo, hi) inclusive absolute z
    z0: int
    clamped: int = 0
    cost: float = 0.0
    seams_cost: list = field(default_factory=list)

    @property
    def shape(self):
        return self.z.shape

    def at(self, x, y) -> int:
        return int(self.z[x - self.x0, y - self.y0])

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "y0": self.y0,
            "band": [int(b) for b in self.band],
            "z0": int(self.z0),
            "clamped": int(self.clamped),
            "cost": round(float(self.cost), 9),
            "z": self.z.astype(int).tolist(),
        }


def _vertical_extent(v) -> float:
    """Height of the tracked tooth content in mm, without context padding."""
    if isinstance(v, Box3D):
        if v.footprint:
            zs = list(v.footprint)
            return (max(zs) - min(zs) + 1) * v.spacing[2]
        return v.vertical_extent_mm
    # ToothVolume: span of its matched slices
    return (v.last_slice - v.first_slice + 1) * v.spacing_z


def flag_double(volumes, factor=1.6) -> list:
    """True for volumes much taller than is typical for the scan.

    The reference is the median vertical extent; with fewer than three
    volumes the median is meaningless and twice the smallest extent is used.
    """
    ext = np.array([_vertical_extent(v) for v in volumes], dtype=float)
    if ext.size == 0:
        return []
    if ext.size < 3:
        limit = 2.0 * ext.min()
    else:
        limit = factor * float(np.median(ext))
    return [bool(e > limit) for e in ext]


def band_limits(box: Box3D, band_fraction) -> tuple:
    """Inclusive absolute z range of the central band of ``box``."""
    h = box.hi[2] - box.lo[2]
    trim = int(np.floor((1.0 - band_fraction) * h / 2.0))
    lo, hi = box.lo[2] + trim, box.hi[2] - 1 - trim
    if hi < lo:
        raise DivisionError(f"box {box.id} is too thin for a division band", "empty_band")
    return lo, hi


def _box_block(vol, box: Box3D) -> np.ndarray:
    (x0, y0, z0), (x1, y1, z1) = box.lo, box.hi
    return vol.data[z0:z1, y0:y1, x0:x1]


def vertical_density_profile(vol, box: Box3D, band_fraction=0.6):
    """Mean density per axial slice of the box and the expected split height.

    Returns ``(profile, z0)`` with ``profile[k]`` for z = box.lo_z + k and
    ``z0`` absolute. ``z0`` is the deepest valley inside the central band
    when its depth exceeds 5% of the profile range, else the box midpoint.
    """
    block = _box_block(vol, box)
    profile = block.reshape(block.shape[0], -1).mean(axis=1, dtype=np.float64)
    lo, hi = band_limits(box, band_fraction)
    mid = (box.lo[2] + box.hi[2] - 1) // 2
    span = profile.max() - profile.min()
    if span <= 0:
        return profile, mid
    left = np.maximum.accumulate(profile)
    right = np.maximum.accumulate(profile[::-1])[::-1]
    depth = np.minimum(left, right) - profile
    k_lo, k_hi = lo - box.lo[2], hi - box.lo[2]
    band_depth = depth[k_lo:k_hi + 1]
    best = band_depth.max()
    if best <= VALLEY_MIN_DEPTH * span:
        return profile, mid
    ties = np.flatnonzero(band_depth == best)
    return profile, int(box.lo[2] + k_lo + ties[len(ties) // 2])


def seam_in_sagittal_slice(image, z0, cfg: DivisionConfig = DivisionConfig(), band=None,
                           band_halfwidth=None, prev=None):
    """Minimum-cost seam z(y) through a normalized (y, z) density image.

    ``band`` is the inclusive (lo, hi) range of z the seam may use (default:
    whole image) and ``prev`` an optional previous seam pulling this one
    towards it. Consecutive heights differ by at most one. Returns
    ``(seam, cost)``; the seam is in image z coordinates.
    """
    n = np.asarray(image, dtype=np.float64)
    if n.ndim != 2 or n.shape[0] == 0:
        raise ValueError("image must be a non-empty 2D (y, z) array")
    ny, nz = n.shape
    lo, hi = (0, nz - 1) if band is None else (max(0, int(band[0])), min(nz - 1, int(band[1])))
    if hi < lo:
        raise DivisionError("empty division band", "empty_band")
    zs = np.arange(lo, hi + 1)
    hw = band_halfwidth if band_halfwidth is not None else max(1.0, (hi - lo) / 2.0)
    node = cfg.density_weight * n[:, lo:hi + 1] + cfg.midline_weight * ((zs - z0) / hw) ** 2
    if prev is not None and cfg.inter_slice_weight:
        node = node + cfg.inter_slice_weight * np.abs(zs[None, :] - np.asarray(prev)[:, None])
    nb = zs.size
    acc = node[0].copy()
    back = np.zeros((ny, nb), dtype=np.int64)
    idx = np.arange(nb)
    sw = cfg.smoothness_weight
    for y in range(1, ny):
        # candidates: stay, come from below (z-1), come from above (z+1)
        stay = acc
        down = np.full(nb, np.inf)
        down[1:] = acc[:-1] + sw
        up = np.full(nb, np.inf)
        up[:-1] = acc[1:] + sw
        cand = np.stack([stay, down, up])
        choice = np.argmin(cand, axis=0)
        back[y] = idx + np.array([0, -1, 1])[choice]
        acc = cand[choice, idx] + node[y]
    end = int(np.argmin(acc + 1e-12 * np.abs(zs - z0)))
    cost = float(acc[end])
    path = np.empty(ny, dtype=np.int64)
    path[-1] = end
    for y in range(ny - 1, 0, -1):
        path[y - 1] = back[y, path[y]]
    return zs[path], cost


def seam_cost(image, seam, z0, cfg: DivisionConfig = DivisionConfig(), band_halfwidth=1.0, prev=None) -> float:
    """Objective value of a given seam (the quantity the DP minimises)."""
    n = np.asarray(image, dtype=np.float64)
    seam = np.asarray(seam)
    ys = np.arange(seam.size)
    total = cfg.density_weight * n[ys, seam].sum()
    total += cfg.midline_weight * (((seam - z0) / band_halfwidth) ** 2).sum()
    total += cfg.smoothness_weight * np.abs(np.diff(seam)).sum()
    if prev is not None:
        total += cfg.inter_slice_weight * np.abs(seam - np.asarray(prev)).sum()
    return float(total)


def build_lattice(vol, box: Box3D, cfg: DivisionConfig = DivisionConfig(), z0=None) -> DivisionSurface:
    """Seam every sagittal slice of ``box`` left to right and stack the seams.

    Each seam is clamped to within ``inter_slice_step`` of its predecessor;
    the number of clamped heights is reported on the surface.
    """
    lo, hi = band_limits(box, cfg.band_fraction)
    if z0 is None:
        _, z0 = vertical_density_profile(vol, box, cfg.band_fraction)
    z0 = int(np.clip(z0, lo, hi))
    block = _box_block(vol, box).astype(np.float64)
    vmin, vmax = block.min(), block.max()
    norm = (block - vmin) / (vmax - vmin) if vmax > vmin else np.zeros_like(block)
    zb = box.lo[2]
    hw = max(1.0, (hi - lo) / 2.0)
    nx = box.hi[0] - box.lo[0]
    ny = box.hi[1] - box.lo[1]
    surface = np.empty((nx, ny), dtype=np.int64)
    prev = None
    clamped = 0
    total = 0.0
    per_slice = []
    for i in range(nx):
        image = norm[:, :, i].T  # (y, z)
        seam, cost = seam_in_sagittal_slice(image, z0 - zb, cfg, (lo - zb, hi - zb), hw, prev)
        if prev is not None:
            bounded = np.clip(seam, prev - cfg.inter_slice_step, prev + cfg.inter_slice_step)
            clamped += int(np.count_nonzero(bounded != seam))
            seam = bounded
        surface[i] = seam + zb
        per_slice.append(cost)
        total += cost
        prev = seam
    return DivisionSurface(box.lo[0], box.lo[1], surface, (lo, hi), z0, clamped, total, per_slice)


def side_mask(box: Box3D, surface: DivisionSurface) -> np.ndarray:
    """Boolean (z, y, x) array over ``box``: True where a voxel is on the upper side."""
    zs = np.arange(box.lo[2], box.hi[2])[:, None, None]
    i0, j0 = box.lo[0] - surface.x0, box.lo[1] - surface.y0
    nx, ny = box.hi[0] - box.lo[0], box.hi[1] - box.lo[1]
    seam = surface.z[i0:i0 + nx, j0:j0 + ny].T  # (y, x)
    return zs < seam[None, :, :]


def _hull(rects):
    arr = np.array(rects)
    return arr[:, 0].min(), arr[:, 1].min(), arr[:, 2].max(), arr[:, 3].max()


def split_volume(box: Box3D, surface: DivisionSurface, margin_vox=(0, 0)) -> tuple:
    """Split ``box`` into (upper, lower) along ``surface``.

    Each child is the hull of the parent's footprint voxels on its side,
    padded by ``margin_vox`` in x and y and clamped to the parent. The upper
    child keeps the parent's top face and the lower child its bottom face, so
    the parent's context above and below the pair is preserved. Both children
    inherit the parent label.
    """
    upper_mask = side_mask(box, surface)
    footprint = box.footprint or {
        z: (box.lo[0], box.lo[1], box.hi[0], box.hi[1]) for z in range(box.lo[2], box.hi[2])
    }
    sides = {True: {}, False: {}}
    for z, (x0, y0, x1, y1) in sorted(footprint.items()):
        if not box.lo[2] <= z < box.hi[2]:
            continue
        x0, y0 = max(x0, box.lo[0]), max(y0, box.lo[1])
        x1, y1 = min(x1, box.hi[0]), min(y1, box.hi[1])
        if x0 >= x1 or y0 >= y1:
            continue
        plane = upper_mask[z - box.lo[2], y0 - box.lo[1]:y1 - box.lo[1], x0 - box.lo[0]:x1 - box.lo[0]]
        for up, sel in ((True, plane), (False, ~plane)):
            if sel.any():
                ys, xs = np.nonzero(sel)
                sides[up][z] = (x0 + int(xs.min()), y0 + int(ys.min()), x0 + int(xs.max()) + 1, y0 + int(ys.max()) + 1)
    if not sides[True] or not sides[False]:
        raise DivisionError(f"surface leaves one side of box {box.id} empty", "irreducible")

    children = []
    for up in (True, False):
        x0, y0, x1, y1 = _hull(list(sides[up].values()))
        zs = sorted(sides[up])
        lo = [max(box.lo[0], x0 - margin_vox[0]), max(box.lo[1], y0 - margin_vox[1]), 0]
        hi = [min(box.hi[0], x1 + margin_vox[0]), min(box.hi[1], y1 + margin_vox[1]), 0]
        if up:
            lo[2], hi[2] = box.lo[2], zs[-1] + 1
        else:
            lo[2], hi[2] = zs[0], box.hi[2]
        children.append(box.replace(
            lo=tuple(lo), hi=tuple(hi), divided_from=box.id, fdi=None,
            arch="upper" if up else "lower", footprint=dict(sides[up]),
        ))
    return children[0], children[1]


@dataclass
class DivisionResult:
    boxes: list
    flagged: list  # parent ids
    divided: list  # parent ids
    irreducible: list  # (parent id, reason)
    surfaces: dict  # parent id -> DivisionSurface


def _divide_one(vol, box, cfg, margin_vox):
    try:
        surface = build_lattice(vol, box, cfg)
        return surface, split_volume(box, surface, margin_vox)
    except DivisionError as exc:
        return exc, None


def divide_boxes(vol, boxes, cfg: DivisionConfig = DivisionConfig(), margin_vox=(0, 0), threads=1) -> DivisionResult:
    """Flag oversized boxes and replace each by its two halves where possible.

    Boxes that cannot be divided are kept and reported. Children take fresh
    ids after the largest existing id, in the order the parents appear.
    Flagged boxes are independent, so up to ``threads`` are divided at once.
    """
    boxes = list(boxes)
    flags = flag_double(boxes, cfg.size_flag_factor)
    flagged = [b for b, f in zip(boxes, flags) if f]
    if threads > 1 and len(flagged) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(lambda b: _divide_one(vol, b, cfg, margin_vox), flagged))
    else:
        done = [_divide_one(vol, b, cfg, margin_vox) for b in flagged]
    outcome = {b.id: r for b, r in zip(flagged, done)}

    next_id = max((b.id for b in boxes), default=-1) + 1
    out, divided, irreducible, surfaces = [], [], [], {}
    for b, flag in zip(boxes, flags):
        if not flag:
            out.append(b)
            continue
        surface, halves = outcome[b.id]
        if halves is None:
            irreducible.append((b.id, surface.kind))
            out.append(b)
            continue
        surfaces[b.id] = surface
        divided.append(b.id)
        out.append(halves[0].replace(id=next_id))
        out.append(halves[1].replace(id=next_id + 1))
        next_id += 2
    return DivisionResult(out, [b.id for b in flagged], divided, irreducible, surfaces)
