"""Per-slice 2D tooth detections: the contract, a JSONL loader and a synthetic detector."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# class -> FDI codes covered by the class (quadrants 1..4)
LABEL_NAMES = {
    1: "first incisor",
    2: "second incisor",
    3: "canine",
    4: "first premolar",
    5: "second premolar",
    6: "first molar",
    7: "second molar",
    8: "third molar",
}
FDI_GROUPS = {label: tuple(q * 10 + label for q in (1, 2, 3, 4)) for label in LABEL_NAMES}


def label_of_fdi(code: int) -> int:
    quadrant, label = divmod(int(code), 10)
    if quadrant not in (1, 2, 3, 4) or label not in LABEL_NAMES:
        raise ValueError(f"not a permanent-dentition FDI code: {code}")
    return label


class DetectionFormatError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, order=True)
class Detection2D:
    slice_index: int
    box: tuple  # (x_min, y_min, x_max, y_max), half-open voxel coordinates
    label: int
    confidence: float = 1.0

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 1 <= int(self.label) <= 8:
            raise ValueError(f"label {self.label} outside 1..8")
        if not 0.0 <= float(self.confidence) <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.slice_index < 0:
            raise ValueError(f"negative slice index {self.slice_index}")

    def to_record(self) -> dict:
        x0, y0, x1, y1 = self.box
        return {
            "slice": int(self.slice_index),
            "x_min": int(x0),
            "y_min": int(y0),
            "x_max": int(x1),
            "y_max": int(y1),
            "label": int(self.label),
            "conf": round(float(self.confidence), 6),
        }


_FIELDS = ("slice", "x_min", "y_min", "x_max", "y_max", "label")


def parse_record(obj, line=None) -> Detection2D:
    if not isinstance(obj, dict):
        raise DetectionFormatError("record is not a JSON object", line)
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise DetectionFormatError(f"missing fields {missing}", line)
    try:
        vals = {k: int(obj[k]) for k in _FIELDS}
    except (TypeError, ValueError):
        raise DetectionFormatError("non-integer coordinate or label", line) from None
    if not 1 <= vals["label"] <= 8:
        raise DetectionFormatError(f"label {vals['label']} outside 1..8", line)
    try:
        return Detection2D(
            vals["slice"],
            (vals["x_min"], vals["y_min"], vals["x_max"], vals["y_max"]),
            vals["label"],
            float(obj.get("conf", 1.0)),
        )
    except ValueError as exc:
        raise DetectionFormatError(str(exc), line) from None


def load_detections(path, nz=None) -> dict:
    """Read a JSON-lines detections file into ``{slice_index: [Detection2D, ...]}``.

    Blank lines are skipped. ``nz`` (when given) bounds the slice index.
    """
    out: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DetectionFormatError(f"malformed JSON ({exc.msg})", lineno) from None
            det = parse_record(obj, lineno)
            if nz is not None and det.slice_index >= nz:
                raise DetectionFormatError(f"slice {det.slice_index} outside volume (nz={nz})", lineno)
            out.setdefault(det.slice_index, []).append(det)
    return out


def save_detections(dets: dict, path) -> None:
    lines = []
    for z in sorted(dets):
        lines.extend(json.dumps(d.to_record(), sort_keys=True) for d in dets[z])
    Path(path).write_text("".join(line + "\n" for line in lines))


def count_detections(dets: dict) -> int:
    return sum(len(v) for v in dets.values())


@dataclass(frozen=True)
class NoiseModel:
    dropout: float = 0.0
    label_confusion: float = 0.0
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    spurious_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout", "label_confusion"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        for name in ("center_jitter", "size_jitter", "spurious_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def is_clean(self) -> bool:
        return not (self.dropout or self.label_confusion or self.center_jitter
                    or self.size_jitter or self.spurious_rate)


def _clip_box(x0, y0, x1, y1, nx, ny):
    x0, y0 = int(np.clip(x0, 0, nx - 1)), int(np.clip(y0, 0, ny - 1))
    x1, y1 = int(np.clip(x1, x0 + 1, nx)), int(np.clip(y1, y0 + 1, ny))
    return x0, y0, x1, y1


def synth_detect(gt, slices, noise: NoiseModel = NoiseModel()) -> dict:
    """Stand-in detector emitting each tooth's axial cross-section box.

    Teeth with a per-slice footprint contribute the cross-section of that
    slice; otherwise the projection of the ground-truth box is used. Noise is
    applied in order: dropout, label confusion, jitter, spurious boxes.
    """
    rng = np.random.default_rng(noise.seed)
    nx, ny, _ = gt.dims
    sizes = [(t.hi[0] - t.lo[0], t.hi[1] - t.lo[1]) for t in gt.teeth]
    if gt.teeth:
        x_rng = (min(t.lo[0] for t in gt.teeth), max(t.hi[0] for t in gt.teeth))
        y_rng = (min(t.lo[1] for t in gt.teeth), max(t.hi[1] for t in gt.teeth))
    out: dict = {}
    for z in sorted(int(s) for s in slices):
        found = []
        for t in gt.teeth:
            if not t.lo[2] <= z < t.hi[2]:
                continue
            if t.footprint:
                if z not in t.footprint:
                    continue
                box = t.footprint[z]
            else:
                box = (t.lo[0], t.lo[1], t.hi[0], t.hi[1])
            found.append((box, t.label))

        dets = []
        for box, label in found:
            if noise.dropout and rng.random() < noise.dropout:
                continue
            if noise.label_confusion and rng.random() < noise.label_confusion:
                label = int(rng.choice([c for c in LABEL_NAMES if c != label]))
            x0, y0, x1, y1 = box
            if noise.center_jitter or noise.size_jitter:
                dx, dy = rng.normal(0.0, noise.center_jitter, 2) if noise.center_jitter else (0.0, 0.0)
                dw, dh = rng.normal(0.0, noise.size_jitter, 2) if noise.size_jitter else (0.0, 0.0)
                cx, cy = (x0 + x1) / 2 + dx, (y0 + y1) / 2 + dy
                w, h = max(1.0, x1 - x0 + dw), max(1.0, y1 - y0 + dh)
                x0, y0 = round(cx - w / 2), round(cy - h / 2)
                x1, y1 = x0 + max(1, round(w)), y0 + max(1, round(h))
            conf = 1.0 - min(0.2, abs(rng.normal(0.0, 0.02))) if not noise.is_clean else 1.0
            dets.append(Detection2D(z, _clip_box(x0, y0, x1, y1, nx, ny), label, conf))

        if noise.spurious_rate and gt.teeth:
            for _ in range(rng.poisson(noise.spurious_rate)):
                w, h = sizes[int(rng.integers(len(sizes)))]
                cx = rng.uniform(*x_rng)
                cy = rng.uniform(*y_rng)
                x0, y0 = round(cx - w / 2), round(cy - h / 2)
                box = _clip_box(x0, y0, x0 + w, y0 + h, nx, ny)
                label = int(rng.integers(1, 9))
                dets.append(Detection2D(z, box, label, float(rng.uniform(0.4, 0.9))))
        if dets:
            out[z] = dets
    return out
