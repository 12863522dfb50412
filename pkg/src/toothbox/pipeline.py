"""End-to-end run: slab, slices, detections, reconstruction, division, evaluation."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .boxes import boxes_document, dump_json
from .config import PipelineConfig
from .detections import load_detections, save_detections, synth_detect
from .division import DivisionResult, divide_boxes
from .evaluation import OutcomeReport, evaluate, render_table
from .phantom import load_ground_truth
from .reconstruction import assign_fdi, reconstruct, volumes_to_boxes
from .slab import axial_mean_profile, sample_slices, select_tooth_slab
from .volume import atomic_write_bytes, load_volume

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class PipelineResult:
    config: PipelineConfig
    profile: object
    slab: tuple
    slices: list
    detections: dict
    volumes: list
    pre_boxes: list
    division: DivisionResult
    boxes: list
    evaluation: OutcomeReport | None
    report: dict


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.debug("stage %s", self.name)
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def run_pipeline(vol, cfg: PipelineConfig = PipelineConfig(), detections=None, gt=None,
                 synthetic=False, sources=None) -> PipelineResult:
    """Run every stage in memory.

    ``detections`` is a slice -> detections map; with ``synthetic`` they are
    drawn from ``gt`` instead. Evaluation runs whenever ``gt`` is given.
    """
    sources = dict(sources or {})
    with _Stage("slab"):
        profile = axial_mean_profile(vol)
        slab = select_tooth_slab(profile, cfg.slicing.fraction)
        slices = sample_slices(slab, vol.spacing[2], cfg.slicing.interval_mm)
        index_step = slices[1] - slices[0] if len(slices) > 1 else 1
        step_mm = index_step * vol.spacing[2]
    with _Stage("detect"):
        if synthetic:
            if gt is None:
                raise ValueError("synthetic detections need ground truth")
            detections = synth_detect(gt, slices, cfg.noise.model(cfg.sub_seed("noise")))
        elif detections is None:
            raise ValueError("no detections given")
        # the detector only runs on the sampled slices
        sampled = set(slices)
        detections = {z: d for z, d in detections.items() if z in sampled}
    with _Stage("reconstruct"):
        match = cfg.match.resolved(step_mm)
        volumes = reconstruct(detections, slices, vol.spacing[2], match)
        pre = volumes_to_boxes(volumes, match, vol.dims, vol.spacing, index_step)
        occlusal_z = (slab[0] + slab[1]) / 2.0
        pre = assign_fdi(pre, occlusal_z)
    with _Stage("divide"):
        margin = tuple(int(round(match.context_margin_mm / s)) for s in vol.spacing[:2])
        # FDI arch comes from geometry again once the fused parents are gone
        division = divide_boxes(vol, [b.replace(arch=None) for b in pre], cfg.division, margin, cfg.threads)
        post = assign_fdi(division.boxes, occlusal_z)
    report_eval = None
    if gt is not None:
        with _Stage("evaluate"):
            report_eval = evaluate(pre, post, gt, cfg.evaluation.coverage_threshold)

    resolved = replace(cfg, match=match).to_dict()
    report = {
        "config": resolved,
        "inputs": sources,
        "volume": {"dims": list(vol.dims), "spacing": list(vol.spacing)},
        "slab": {"z_lo": int(slab[0]), "z_hi": int(slab[1]), "step": int(index_step),
                 "slices": [int(z) for z in slices]},
        "detections": sum(len(v) for v in detections.values()),
        "reconstruction": {"volumes": len(volumes), "boxes": len(pre)},
        "division": {
            "flagged": division.flagged,
            "divided": division.divided,
            "irreducible": [[i, k] for i, k in division.irreducible],
            "clamped": {str(i): s.clamped for i, s in sorted(division.surfaces.items())},
        },
        "boxes": len(post),
        "evaluation": None if report_eval is None else report_eval.to_dict(),
    }
    return PipelineResult(cfg, profile, slab, slices, detections, volumes, pre, division, post,
                          report_eval, report)


def run_to_dir(volume_path, out_dir, cfg: PipelineConfig = PipelineConfig(), detections_path=None,
               gt_path=None, synthetic=False, figures_dir=None) -> PipelineResult:
    """Run from files and write ``boxes.json``, ``report.json`` and ``report.tsv``.

    Synthetic runs also write ``detections.jsonl``. If any stage fails, the
    files this run already wrote are removed and a StageError is raised.
    """
    with _Stage("load"):
        vol = load_volume(volume_path)
        gt = load_ground_truth(gt_path) if gt_path else None
        dets = None
        if not synthetic:
            if detections_path is None:
                raise ValueError("either a detections file or synthetic detections are required")
            dets = load_detections(detections_path, nz=vol.dims[2])
    sources = {
        "volume": Path(volume_path).name,
        "detections": "synthetic" if synthetic else Path(detections_path).name,
        "ground_truth": Path(gt_path).name if gt_path else None,
    }
    result = run_pipeline(vol, cfg, dets, gt, synthetic, sources)

    out_dir = Path(out_dir)
    files = {
        "boxes.json": dump_json(boxes_document(result.boxes, vol.dims, vol.spacing)),
        "report.json": dump_json(result.report),
    }
    if result.evaluation is not None:
        files["report.tsv"] = render_table([result.evaluation], post=False) + "\n" + render_table([result.evaluation])
    if synthetic:
        files["detections.jsonl"] = None
    written = []
    try:
        with _Stage("write"):
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                path = out_dir / name
                written.append(path)
                if text is None:
                    save_detections(result.detections, path)
                else:
                    atomic_write_bytes(path, text.encode())
        if figures_dir is not None:
            with _Stage("figures"):
                from .plotting import render_run_figures

                written.extend(render_run_figures(vol, result, figures_dir))
    except StageError:
        for path in written:
            try:
                os.remove(path)
            except FileNotFoundError:
                pass
        raise
    return result
