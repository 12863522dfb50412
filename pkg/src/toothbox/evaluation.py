"""Outcome taxonomy for reconstructed boxes against phantom ground truth.

A ground-truth tooth's voxels are approximated by its per-slice cross-section
boxes when the ground truth carries them, otherwise by its whole box. Every
predicted box is scored by the fraction of each tooth's voxels it contains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_assignment
from .boxes import intersection_volume

DETECT_FRACTION = 0.05  # below this a prediction does not "contain" a tooth
PRE_KEYS = ("single_tooth", "incomplete", "double_tooth", "not_detected")
POST_KEYS = ("good_reconstruction", "bad_reconstruction", "double_tooth", "not_detected")


def _sections(t):
    """(z, x0, y0, x1, y1) rows describing tooth ``t``'s voxels."""
    if t.footprint:
        return np.array([(z, *b) for z, b in sorted(t.footprint.items())], dtype=np.int64)
    return np.array(
        [(z, t.lo[0], t.lo[1], t.hi[0], t.hi[1]) for z in range(t.lo[2], t.hi[2])], dtype=np.int64
    )


def _contained(sec, box) -> int:
    z, x0, y0, x1, y1 = sec.T
    inside = (z >= box.lo[2]) & (z < box.hi[2])
    w = np.clip(np.minimum(x1, box.hi[0]) - np.maximum(x0, box.lo[0]), 0, None)
    h = np.clip(np.minimum(y1, box.hi[1]) - np.maximum(y0, box.lo[1]), 0, None)
    return int((w * h * inside).sum())


def coverage_matrix(preds, gt_teeth) -> np.ndarray:
    """``C[g, p]`` = fraction of tooth g's voxels inside prediction p."""
    c = np.zeros((len(gt_teeth), len(preds)))
    for g, t in enumerate(gt_teeth):
        sec = _sections(t)
        total = int(((sec[:, 3] - sec[:, 1]) * (sec[:, 4] - sec[:, 2])).sum())
        for p, b in enumerate(preds):
            c[g, p] = _contained(sec, b) / total if total else 0.0
    return c


def iou_3d(a, b) -> float:
    inter = intersection_volume(a.lo, a.hi, b.lo, b.hi)
    union = a.volume + b.volume - inter
    return inter / union if union else 0.0


@dataclass
class Correspondence:
    coverage: np.ndarray
    gt_to_pred: list  # pred index or None per GT tooth
    one_to_one: list  # (gt index, pred index) optimal one-to-one pairs
    false_positives: list  # pred indices containing no tooth

    def sharing(self, g) -> int:
        p = self.gt_to_pred[g]
        return 0 if p is None else sum(1 for q in self.gt_to_pred if q == p)


def match_pred_to_gt(preds, gt) -> Correspondence:
    """Map every GT tooth to the prediction holding most of it.

    Ties on coverage go to the higher 3D IoU, then the lower index. Teeth
    with under 5% in every prediction are unmatched. A one-to-one optimal
    correspondence on ``1 - coverage`` is also reported.
    """
    teeth = list(gt.teeth) if hasattr(gt, "teeth") else list(gt)
    preds = list(preds)
    c = coverage_matrix(preds, teeth)
    gt_to_pred = []
    for g, t in enumerate(teeth):
        if not preds or c[g].max() < DETECT_FRACTION:
            gt_to_pred.append(None)
            continue
        best = max(range(len(preds)), key=lambda p: (c[g, p], iou_3d(t, preds[p]), -p))
        gt_to_pred.append(best)
    allowed = np.where(c >= DETECT_FRACTION, 1.0 - c, np.inf)
    one_to_one = solve_assignment(allowed) if c.size else []
    fps = [p for p in range(len(preds)) if not (c[:, p] >= DETECT_FRACTION).any()]
    return Correspondence(c, gt_to_pred, one_to_one, fps)


def categorize_pre_division(preds, gt, coverage_threshold=0.95, corr=None) -> dict:
    """Per-tooth outcomes of the undivided reconstruction.

    ``incomplete`` holds teeth alone in their prediction but covered below
    the threshold, so the categories partition the teeth.
    """
    corr = corr or match_pred_to_gt(preds, gt)
    counts = dict.fromkeys(PRE_KEYS, 0)
    for g, p in enumerate(corr.gt_to_pred):
        if p is None:
            counts["not_detected"] += 1
        elif corr.sharing(g) >= 2:
            counts["double_tooth"] += 1
        elif corr.coverage[g, p] >= coverage_threshold:
            counts["single_tooth"] += 1
        else:
            counts["incomplete"] += 1
    return counts


def categorize_post_division(preds, gt, coverage_threshold=0.95, corr=None) -> dict:
    """Per-tooth outcomes after division.

    A good reconstruction covers the tooth to the threshold and holds no more
    than 5% of any other tooth; a matched tooth failing either test is a bad
    reconstruction.
    """
    corr = corr or match_pred_to_gt(preds, gt)
    counts = dict.fromkeys(POST_KEYS, 0)
    c = corr.coverage
    for g, p in enumerate(corr.gt_to_pred):
        if p is None:
            counts["not_detected"] += 1
        elif corr.sharing(g) >= 2:
            counts["double_tooth"] += 1
        else:
            others = np.delete(c[:, p], g)
            clean = not (others > DETECT_FRACTION).any()
            counts["good_reconstruction" if c[g, p] >= coverage_threshold and clean else "bad_reconstruction"] += 1
    return counts


def detection_rate(total, not_detected=None) -> float:
    """Fraction of teeth found by the pipeline, whatever the reconstruction quality.

    Takes the tooth count and the number missed, or one outcome-count dict.
    """
    if isinstance(total, dict):
        counts = total
        not_detected = counts["not_detected"]
        total = sum(counts.values())
    elif not_detected is None:
        raise TypeError("detection_rate needs the number of missed teeth")
    if total <= 0:
        raise ValueError("detection rate is undefined without teeth")
    if not 0 <= not_detected <= total:
        raise ValueError("missed teeth must be between 0 and the total")
    return (total - not_detected) / total


def label_accuracy(preds, gt, corr=None) -> float:
    teeth = list(gt.teeth)
    corr = corr or match_pred_to_gt(preds, gt)
    if not teeth:
        return 1.0
    ok = sum(1 for t, p in zip(teeth, corr.gt_to_pred) if p is not None and preds[p].label == t.label)
    return ok / len(teeth)


@dataclass
class OutcomeReport:
    pre_division: dict
    post_division: dict
    detection_rate: float
    false_positives: int
    total: int
    label_accuracy: float = 1.0
    gap_mm: float | None = None
    correspondence: list = field(default_factory=list)  # [gt id, pred id] pairs

    @property
    def clearance(self) -> str:
        return "with" if self.gap_mm is None or self.gap_mm > 0 else "without"

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "pre_division": dict(self.pre_division),
            "post_division": dict(self.post_division),
            "detection_rate": round(self.detection_rate, 9),
            "false_positives": self.false_positives,
            "label_accuracy": round(self.label_accuracy, 9),
            "gap_mm": None if self.gap_mm is None else round(float(self.gap_mm), 6),
            "correspondence": [list(p) for p in self.correspondence],
        }

    @classmethod
    def from_dict(cls, d) -> "OutcomeReport":
        return cls(d["pre_division"], d["post_division"], d["detection_rate"], d["false_positives"],
                   d["total"], d.get("label_accuracy", 1.0), d.get("gap_mm"),
                   [tuple(p) for p in d.get("correspondence", [])])


def evaluate(pre_boxes, post_boxes, gt, coverage_threshold=0.95) -> OutcomeReport:
    """Score undivided and divided boxes against ``gt``."""
    pre_corr = match_pred_to_gt(pre_boxes, gt)
    post_corr = match_pred_to_gt(post_boxes, gt)
    pre = categorize_pre_division(pre_boxes, gt, coverage_threshold, pre_corr)
    post = categorize_post_division(post_boxes, gt, coverage_threshold, post_corr)
    total = len(gt.teeth)
    teeth = list(gt.teeth)
    return OutcomeReport(
        pre_division=pre,
        post_division=post,
        detection_rate=detection_rate(total, post["not_detected"]) if total else 0.0,
        false_positives=len(post_corr.false_positives),
        total=total,
        label_accuracy=label_accuracy(post_boxes, gt, post_corr),
        gap_mm=getattr(gt, "gap_mm", None),
        correspondence=[(teeth[g].id, post_boxes[p].id) for g, p in post_corr.one_to_one],
    )


def _cell(n, total):
    return f"{n} ({100.0 * n / total:.2f}%)" if total else str(n)


def render_table(reports, post=True, sep="\t") -> str:
    """Outcome counts split by occlusal clearance, one row per category.

    ``reports`` are pooled by the sign of their phantom gap: positive gap is
    "with occlusal clearance", zero or negative is "without".
    """
    keys = POST_KEYS if post else PRE_KEYS
    attr = "post_division" if post else "pre_division"
    pooled = {"with": dict.fromkeys(keys, 0), "without": dict.fromkeys(keys, 0)}
    for r in reports:
        for k in keys:
            pooled[r.clearance][k] += getattr(r, attr).get(k, 0)
    totals = {c: sum(v.values()) for c, v in pooled.items()}
    lines = [sep.join(["category", "with occlusal clearance", "without occlusal clearance"])]
    for k in keys:
        lines.append(sep.join([k, _cell(pooled["with"][k], totals["with"]),
                               _cell(pooled["without"][k], totals["without"])]))
    return "\n".join(lines) + "\n"
