"""Axis-aligned boxes in voxel coordinates.

All boxes are half-open: a 2D box ``(x_min, y_min, x_max, y_max)`` covers
voxels ``x_min <= x < x_max`` and ``y_min <= y < y_max``. Box3D follows the
same rule per axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


def iou_2d(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def box_volume(lo, hi) -> int:
    return int(np.prod([max(0, h - l) for l, h in zip(lo, hi)]))


def intersection_volume(lo_a, hi_a, lo_b, hi_b) -> int:
    return int(np.prod([max(0, min(ha, hb) - max(la, lb)) for la, ha, lb, hb in zip(lo_a, hi_a, lo_b, hi_b)]))


@dataclass(frozen=True)
class Box3D:
    """Labeled 3D bounding box, ``lo`` inclusive and ``hi`` exclusive, (x, y, z) order."""

    id: int
    lo: tuple
    hi: tuple
    label: int
    spacing: tuple = (1.0, 1.0, 1.0)
    fdi: int | None = None
    detections: int = 0
    divided_from: int | None = None
    arch: str | None = None
    # z -> (x_min, y_min, x_max, y_max); the per-slice extent the box was built from
    footprint: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(l >= h for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate box lo={self.lo} hi={self.hi}")
        if not 1 <= int(self.label) <= 8:
            raise ValueError(f"label must be in 1..8, got {self.label}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def volume(self) -> int:
        return box_volume(self.lo, self.hi)

    @property
    def extent(self):
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    @property
    def vertical_extent_mm(self) -> float:
        return (self.hi[2] - self.lo[2]) * self.spacing[2]

    @property
    def centroid(self):
        return tuple((l + h) / 2.0 for l, h in zip(self.lo, self.hi))

    @property
    def lo_mm(self):
        return tuple(v * s for v, s in zip(self.lo, self.spacing))

    @property
    def hi_mm(self):
        return tuple(v * s for v, s in zip(self.hi, self.spacing))

    def replace(self, **changes) -> "Box3D":
        return replace(self, **changes)

    def to_dict(self, with_footprint=True) -> dict:
        out = {
            "id": self.id,
            "label": self.label,
            "fdi": self.fdi,
            "vox": {"min": list(self.lo), "max": list(self.hi)},
            "mm": {
                "min": [round(v, 6) for v in self.lo_mm],
                "max": [round(v, 6) for v in self.hi_mm],
            },
            "detections": self.detections,
            "divided_from": self.divided_from,
        }
        if self.arch is not None:
            out["arch"] = self.arch
        if with_footprint and self.footprint:
            out["footprint"] = [[int(z), *map(int, b)] for z, b in sorted(self.footprint.items())]
        return out

    @classmethod
    def from_dict(cls, d: dict, spacing=None) -> "Box3D":
        lo = d["vox"]["min"]
        hi = d["vox"]["max"]
        if spacing is None:
            # recover spacing from the mm block when not supplied
            mm_lo, mm_hi = d.get("mm", {}).get("min"), d.get("mm", {}).get("max")
            if mm_lo and mm_hi:
                spacing = tuple(
                    (mh - ml) / (h - l) for ml, mh, l, h in zip(mm_lo, mm_hi, lo, hi)
                )
            else:
                spacing = (1.0, 1.0, 1.0)
        footprint = {int(r[0]): tuple(int(v) for v in r[1:5]) for r in d.get("footprint", [])}
        return cls(
            id=int(d["id"]),
            lo=lo,
            hi=hi,
            label=int(d["label"]),
            spacing=spacing,
            fdi=d.get("fdi"),
            detections=int(d.get("detections", 0)),
            divided_from=d.get("divided_from"),
            arch=d.get("arch"),
            footprint=footprint,
        )


def boxes_document(boxes, dims, spacing, **extra) -> dict:
    doc = {
        "dims": [int(v) for v in dims],
        "spacing": [float(v) for v in spacing],
        "boxes": [b.to_dict() for b in boxes],
    }
    doc.update(extra)
    return doc


def dump_json(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_boxes(path, boxes, dims, spacing, **extra) -> None:
    Path(path).write_text(dump_json(boxes_document(boxes, dims, spacing, **extra)))


def load_boxes(path):
    """Read a boxes document; returns ``(boxes, doc)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc.msg})") from None
    entries = doc["boxes"] if isinstance(doc, dict) else doc
    spacing = tuple(doc["spacing"]) if isinstance(doc, dict) and "spacing" in doc else None
    return [Box3D.from_dict(d, spacing=spacing) for d in entries], doc
