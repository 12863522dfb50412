"""Sequential slice-to-slice matching of 2D detections into tooth volumes.

Slices are visited top-down. On every slice the active volumes and the new
detections are scored with a three-term cost (vertical distance gated by a
proximity bound, axial overlap, label agreement), paired by optimal
assignment, and volumes that go unmatched for too many slices are closed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from .assignment import FORBIDDEN, solve_assignment
from .boxes import Box3D, iou_2d

W2_EPSILON = 1e-6


@dataclass(frozen=True)
class MatchConfig:
    """Match-cost weights and lifecycle limits.

    Weights left as ``None`` are derived from ``beta`` and the slice step when
    the config is resolved: ``gamma`` is one slice step in mm,
    ``w1 = beta / (4 gamma)``, ``w2 = beta (1 + 1e-6)``, ``w3 = 0.2 beta``.
    """

    beta: float = 1.0
    gamma_mm: float | None = None
    w1: float | None = None
    w2: float | None = None
    w3: float | None = None
    max_skipped_slices: int = 2
    min_detections: int = 3
    min_height_mm: float = 2.8
    context_margin_mm: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        for name in ("w1", "w2", "w3"):
            w = getattr(self, name)
            if w is not None and w < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.gamma_mm is not None and not self.gamma_mm > 0:
            raise ValueError("gamma_mm must be > 0")
        if self.max_skipped_slices < 0 or self.min_detections < 1:
            raise ValueError("invalid lifecycle limits")
        if self.min_height_mm < 0 or self.context_margin_mm < 0:
            raise ValueError("min_height_mm and context_margin_mm must be >= 0")

    def resolved(self, step_mm: float) -> "MatchConfig":
        gamma = self.gamma_mm if self.gamma_mm is not None else float(step_mm)
        return replace(
            self,
            gamma_mm=gamma,
            w1=self.w1 if self.w1 is not None else self.beta / (4.0 * gamma),
            w2=self.w2 if self.w2 is not None else self.beta * (1.0 + W2_EPSILON),
            w3=self.w3 if self.w3 is not None else 0.2 * self.beta,
        )

    @property
    def is_resolved(self) -> bool:
        return None not in (self.gamma_mm, self.w1, self.w2, self.w3)


@dataclass
class ToothVolume:
    id: int
    spacing_z: float = 1.0
    matches: list = field(default_factory=list)  # [(slice_index, box, label)] in traversal order
    label_histogram: Counter = field(default_factory=Counter)
    active: bool = True
    final_label: int | None = None
    slices_since_last_match: int = 0

    @property
    def state(self) -> str:
        return "active" if self.active else "closed"

    @property
    def last(self):
        return self.matches[-1]

    @property
    def first_slice(self) -> int:
        return self.matches[0][0]

    @property
    def last_slice(self) -> int:
        return self.matches[-1][0]

    def add(self, det):
        if not self.active:
            raise RuntimeError(f"volume {self.id} is closed")
        if self.matches and det.slice_index <= self.last_slice:
            raise ValueError("matches must follow traversal order, one per slice")
        self.matches.append((det.slice_index, tuple(det.box), det.label))
        self.label_histogram[det.label] += 1
        self.slices_since_last_match = 0

    def label_fraction(self, label) -> float:
        total = sum(self.label_histogram.values())
        return self.label_histogram[label] / total if total else 0.0


def step_gate(d, gamma) -> int:
    """0 when the distance is within the proximity bound, else 1."""
    return 0 if d <= gamma else 1


def match_cost(t: ToothVolume, b, cfg: MatchConfig) -> float:
    """Cost of appending detection ``b`` to volume ``t`` (lower is better)."""
    if not cfg.is_resolved:
        raise ValueError("match_cost needs a resolved MatchConfig")
    z_last, box_last, _ = t.last
    d = abs(b.slice_index - z_last) * t.spacing_z
    return (
        cfg.w1 * d * step_gate(d, cfg.gamma_mm)
        + cfg.w2 * (1.0 - iou_2d(b.box, box_last))
        + cfg.w3 * (1.0 - t.label_fraction(b.label))
    )


def is_admissible(t: ToothVolume, b, cfg: MatchConfig) -> bool:
    return t.active and match_cost(t, b, cfg) <= cfg.beta


def _detection_order(det):
    return (*det.box, det.label, -det.confidence)


def traversal_slices(dets: dict, slices=None):
    if slices is not None:
        return sorted(int(z) for z in slices)
    keys = sorted(int(z) for z, v in dets.items() if v)
    if not keys:
        return []
    step = reduce(math.gcd, (b - a for a, b in zip(keys, keys[1:])), 0) or 1
    return list(range(keys[0], keys[-1] + 1, step))


def reconstruct(dets: dict, slices=None, spacing_z=1.0, cfg: MatchConfig = MatchConfig(), keep_invalid=False):
    """Build tooth volumes from per-slice detections.

    ``slices`` is the ordered list of sampled slice indices the detector ran
    on (including empty ones); when omitted it is inferred as the regular grid
    spanned by the detection slices. Volumes with fewer than
    ``min_detections`` matches, or shorter than ``min_height_mm``, are
    dropped unless ``keep_invalid`` is set.
    """
    order = traversal_slices(dets, slices)
    if not order:
        return []
    index_step = min((b - a for a, b in zip(order, order[1:])), default=1)
    step_mm = index_step * spacing_z
    if not cfg.is_resolved:
        cfg = cfg.resolved(step_mm)

    volumes: list[ToothVolume] = []
    started = False
    for z in order:
        new = sorted(dets.get(z, ()), key=_detection_order)
        if not started:
            if not new:
                continue
            started = True
            for det in new:
                t = ToothVolume(len(volumes), spacing_z)
                t.add(det)
                volumes.append(t)
            continue

        active = [t for t in volumes if t.active]
        matched_t, matched_d = set(), set()
        if active and new:
            costs = np.full((len(active), len(new)), FORBIDDEN)
            for i, t in enumerate(active):
                for j, det in enumerate(new):
                    q = match_cost(t, det, cfg)
                    if q <= cfg.beta:
                        costs[i, j] = q
            for i, j in solve_assignment(costs):
                active[i].add(new[j])
                matched_t.add(i)
                matched_d.add(j)
        for j, det in enumerate(new):
            if j not in matched_d:
                t = ToothVolume(len(volumes), spacing_z)
                t.add(det)
                volumes.append(t)
        for i, t in enumerate(active):
            if i not in matched_t:
                t.slices_since_last_match += 1
                if t.slices_since_last_match > cfg.max_skipped_slices:
                    t.active = False

    for t in volumes:
        t.active = False
        t.final_label = finalize_label(t)
    if keep_invalid:
        return volumes
    return [t for t in volumes if is_valid(t, cfg, index_step)]


def is_valid(t: ToothVolume, cfg: MatchConfig, index_step=1) -> bool:
    if len(t.matches) < cfg.min_detections:
        return False
    spanned = (t.last_slice - t.first_slice) // index_step + 1
    step_mm = index_step * t.spacing_z
    return spanned * step_mm >= cfg.min_height_mm


def finalize_label(t: ToothVolume) -> int:
    """Majority label; ties go to the longest consecutive run, then the lowest class."""
    if not t.label_histogram:
        raise ValueError("volume has no matches")
    top = max(t.label_histogram.values())
    tied = sorted(c for c, n in t.label_histogram.items() if n == top)
    if len(tied) == 1:
        return tied[0]
    runs = Counter()
    prev, run = None, 0
    for _, _, label in t.matches:
        run = run + 1 if label == prev else 1
        prev = label
        runs[label] = max(runs[label], run)
    return max(tied, key=lambda c: (runs[c], -c))


def interpolate_volume(t: ToothVolume, slices=None) -> dict:
    """Per-slice boxes with gaps between matches filled linearly.

    Returns ``{z: (x_min, y_min, x_max, y_max)}`` as floats for every slice in
    ``slices`` (default: every integer slice) between the first and last
    match. Matched slices keep their boxes verbatim.
    """
    if not t.matches:
        raise ValueError("volume has no matches")
    zs = np.array([m[0] for m in t.matches], dtype=float)
    boxes = np.array([m[1] for m in t.matches], dtype=float)
    if len(t.matches) == 1:
        return {int(zs[0]): tuple(boxes[0])}
    if slices is None:
        targets = np.arange(int(zs[0]), int(zs[-1]) + 1)
    else:
        targets = np.array(sorted(z for z in slices if zs[0] <= z <= zs[-1]), dtype=int)
    cols = [np.interp(targets, zs, boxes[:, k]) for k in range(4)]
    out = {int(z): tuple(float(c[i]) for c in cols) for i, z in enumerate(targets)}
    for z, box, _ in t.matches:
        out[int(z)] = tuple(float(v) for v in box)
    return out


def bounding_box_3d(t: ToothVolume, cfg: MatchConfig, dims, spacing, index_step=1, box_id=None) -> Box3D:
    """Axis-aligned hull of the interpolated boxes, padded and clamped to the volume.

    The vertical hull covers each outer matched slice plus the ``index_step - 1``
    unsampled slices beyond it, where the tooth may still be present.
    """
    dense = interpolate_volume(t)
    arr = np.array(list(dense.values()))
    footprint = {
        z: (math.floor(b[0]), math.floor(b[1]), math.ceil(b[2]), math.ceil(b[3]))
        for z, b in sorted(dense.items())
    }
    support = max(0, int(index_step) - 1)
    lo = [math.floor(arr[:, 0].min()), math.floor(arr[:, 1].min()), t.first_slice - support]
    hi = [math.ceil(arr[:, 2].max()), math.ceil(arr[:, 3].max()), t.last_slice + 1 + support]
    for axis in range(3):
        pad = int(round(cfg.context_margin_mm / spacing[axis]))
        lo[axis] = max(0, lo[axis] - pad)
        hi[axis] = min(int(dims[axis]), hi[axis] + pad)
    label = t.final_label if t.final_label is not None else finalize_label(t)
    return Box3D(
        id=t.id if box_id is None else box_id,
        lo=tuple(lo),
        hi=tuple(hi),
        label=label,
        spacing=tuple(spacing),
        detections=len(t.matches),
        footprint=footprint,
    )


def assign_fdi(boxes, occlusal_z=None, mid_x=None):
    """Attach FDI codes from each box centroid's quadrant.

    Upper/lower comes from a box's ``arch`` when set, otherwise from its
    centroid against ``occlusal_z`` (default: midpoint of the boxes' z range).
    Right/left splits at ``mid_x`` (default: median centroid x); patient right
    is low x. Centroids exactly on a plane go lower/left.
    """
    boxes = list(boxes)
    if not boxes:
        return []
    cents = np.array([b.centroid for b in boxes])
    if mid_x is None:
        mid_x = float(np.median(cents[:, 0]))
    if occlusal_z is None:
        occlusal_z = (min(b.lo[2] for b in boxes) + max(b.hi[2] for b in boxes)) / 2.0
    out = []
    for b, (cx, _, cz) in zip(boxes, cents):
        arch = b.arch or ("upper" if cz < occlusal_z else "lower")
        right = cx < mid_x
        quadrant = {("upper", True): 1, ("upper", False): 2, ("lower", False): 3, ("lower", True): 4}[(arch, right)]
        out.append(b.replace(fdi=quadrant * 10 + b.label, arch=arch))
    return out


def volumes_to_boxes(volumes, cfg: MatchConfig, dims, spacing, index_step=1):
    return [bounding_box_3d(t, cfg, dims, spacing, index_step) for t in volumes]
