"""Command line entry point: ``toothbox <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .boxes import dump_json, load_boxes, save_boxes
from .config import ConfigError, PipelineConfig, load_config
from .detections import DetectionFormatError, load_detections, save_detections, synth_detect
from .division import divide_boxes
from .evaluation import evaluate, render_table
from .phantom import (PhantomSpecError, load_ground_truth, load_phantom_spec, random_phantom_spec,
                      render_phantom, save_json)
from .pipeline import StageError, run_to_dir
from .reconstruction import assign_fdi, reconstruct, volumes_to_boxes
from .slab import axial_mean_profile, sample_slices, select_tooth_slab
from .volume import VolumeFormatError, load_volume, save_volume

log = logging.getLogger("toothbox")


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    cfg = cfg.override(seed=getattr(args, "seed", None), threads=getattr(args, "threads", None))
    cfg = cfg.override("slicing", interval_mm=getattr(args, "interval_mm", None),
                       fraction=getattr(args, "fraction", None))
    cfg = cfg.override("match", beta=getattr(args, "beta", None),
                       max_skipped_slices=getattr(args, "max_skipped", None),
                       context_margin_mm=getattr(args, "margin_mm", None))
    cfg = cfg.override("division", size_flag_factor=getattr(args, "flag_factor", None))
    cfg = cfg.override("noise", dropout=getattr(args, "dropout", None),
                       label_confusion=getattr(args, "label_confusion", None),
                       center_jitter=getattr(args, "center_jitter", None),
                       size_jitter=getattr(args, "size_jitter", None),
                       spurious_rate=getattr(args, "spurious_rate", None))
    return cfg.override("evaluation", coverage_threshold=getattr(args, "coverage", None))


def _slices(vol, cfg):
    slab = select_tooth_slab(axial_mean_profile(vol), cfg.slicing.fraction)
    return slab, sample_slices(slab, vol.spacing[2], cfg.slicing.interval_mm)


def cmd_phantom(args):
    if args.spec:
        spec = load_phantom_spec(args.spec)
    else:
        spec = random_phantom_spec(
            args.seed or 0, n_teeth=args.n_teeth, gap_mm=args.gap_mm, fused_pairs=args.fused_pairs,
            tilt=tuple(args.tilt), spacing=args.spacing, noise=args.noise, symmetric=args.symmetric,
        )
    ph = render_phantom(spec)
    save_volume(ph.volume, args.out_volume)
    save_json(ph.ground_truth, args.out_gt)
    if args.out_spec:
        save_json(spec, args.out_spec)
    print(json.dumps({"dims": list(ph.volume.dims), "spacing": [round(s, 6) for s in ph.volume.spacing],
                      "teeth": len(ph.ground_truth.teeth), "gap_mm": spec.gap_mm}, sort_keys=True))


def cmd_slice(args):
    cfg = _config(args)
    vol = load_volume(args.volume)
    slab, slices = _slices(vol, cfg)
    print(json.dumps({"z_lo": slab[0], "z_hi": slab[1], "slices": slices}, sort_keys=True))


def cmd_detect_synthetic(args):
    cfg = _config(args)
    vol = load_volume(args.volume)
    gt = load_ground_truth(args.gt)
    _, slices = _slices(vol, cfg)
    dets = synth_detect(gt, slices, cfg.noise.model(cfg.sub_seed("noise")))
    save_detections(dets, args.out)
    print(json.dumps({"slices": len(slices), "detections": sum(len(v) for v in dets.values())}))


def cmd_reconstruct(args):
    cfg = _config(args)
    vol = load_volume(args.volume)
    dets = load_detections(args.detections, nz=vol.dims[2])
    slab, slices = _slices(vol, cfg)
    step = slices[1] - slices[0] if len(slices) > 1 else 1
    match = cfg.match.resolved(step * vol.spacing[2])
    sampled = set(slices)
    volumes = reconstruct({z: d for z, d in dets.items() if z in sampled}, slices, vol.spacing[2], match)
    boxes = assign_fdi(volumes_to_boxes(volumes, match, vol.dims, vol.spacing, step), (slab[0] + slab[1]) / 2.0)
    save_boxes(args.out, boxes, vol.dims, vol.spacing)
    print(json.dumps({"volumes": len(boxes)}))


def cmd_divide(args):
    cfg = _config(args)
    vol = load_volume(args.volume)
    boxes, _ = load_boxes(args.boxes)
    margin = tuple(int(round(cfg.match.context_margin_mm / s)) for s in vol.spacing[:2])
    res = divide_boxes(vol, [b.replace(arch=None) for b in boxes], cfg.division, margin, cfg.threads)
    slab, _ = _slices(vol, cfg)
    out = assign_fdi(res.boxes, (slab[0] + slab[1]) / 2.0)
    save_boxes(args.out, out, vol.dims, vol.spacing)
    if args.emit_surface:
        Path(args.emit_surface).write_text(
            dump_json({str(k): s.to_dict() for k, s in sorted(res.surfaces.items())}))
    print(json.dumps({"flagged": res.flagged, "divided": res.divided,
                      "irreducible": [list(x) for x in res.irreducible]}))


def cmd_evaluate(args):
    cfg = _config(args)
    gt = load_ground_truth(args.gt)
    post, _ = load_boxes(args.boxes)
    pre = load_boxes(args.pre_boxes)[0] if args.pre_boxes else post
    report = evaluate(pre, post, gt, cfg.evaluation.coverage_threshold)
    text = dump_json(report.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    sys.stdout.write("\n" + render_table([report], post=False) + "\n" + render_table([report]))
    if args.figures:
        from .plotting import plot_outcomes

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plot_outcomes(report, Path(args.figures) / "outcomes.png")


def cmd_run(args):
    cfg = _config(args)
    if args.synthetic and not args.gt:
        raise SystemExit("error: --synthetic needs --gt")
    if not args.synthetic and not args.detections:
        raise SystemExit("error: give --detections or --synthetic")
    result = run_to_dir(args.volume, args.out_dir, cfg, args.detections, args.gt, args.synthetic, args.figures)
    summary = {"boxes": len(result.boxes), "flagged": result.division.flagged, "out_dir": str(args.out_dir)}
    print(json.dumps(summary, sort_keys=True))
    if result.evaluation is not None:
        sys.stdout.write(render_table([result.evaluation]))


def cmd_export_slices(args):
    from .export import export_slices

    vol = load_volume(args.volume)
    boxes = load_boxes(args.boxes)[0] if args.boxes else ()
    paths = export_slices(vol, args.out_dir, boxes, args.axis, args.every)
    print(json.dumps({"written": len(paths)}))


def _add_config(p):
    p.add_argument("--config", help="pipeline config JSON (default: $TOOTHBOX_CONFIG)")


def _add_slicing(p):
    p.add_argument("--interval-mm", type=float, help="axial sampling interval (default 1.4)")
    p.add_argument("--fraction", type=float, help="slab threshold fraction (default 0.9)")


def _add_noise(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--label-confusion", type=float)
    p.add_argument("--center-jitter", type=float)
    p.add_argument("--size-jitter", type=float)
    p.add_argument("--spurious-rate", type=float)


def _add_match(p):
    p.add_argument("--beta", type=float)
    p.add_argument("--max-skipped", type=int)
    p.add_argument("--margin-mm", type=float, help="context margin of final boxes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toothbox", description="3D tooth boxes from per-slice detections in CBCT-style volumes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, help="cap on worker threads")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("phantom", help="render a synthetic dental phantom")
    p.add_argument("--out-volume", required=True)
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-spec")
    p.add_argument("--spec", help="phantom spec JSON; otherwise a random spec is drawn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-teeth", type=int)
    p.add_argument("--gap-mm", type=float)
    p.add_argument("--fused-pairs", type=int, default=0)
    p.add_argument("--tilt", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    p.add_argument("--spacing", type=float, default=0.6)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--symmetric", action="store_true")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("slice", help="print the tooth slab and sampled slices")
    p.add_argument("--volume", required=True)
    _add_slicing(p)
    _add_config(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("detect-synthetic", help="synthetic detections from ground truth")
    p.add_argument("--volume", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _add_noise(p)
    _add_slicing(p)
    _add_config(p)
    p.set_defaults(func=cmd_detect_synthetic)

    p = sub.add_parser("reconstruct", help="match detections into 3D boxes")
    p.add_argument("--volume", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    _add_match(p)
    _add_slicing(p)
    _add_config(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("divide", help="split oversized boxes along a seam surface")
    p.add_argument("--volume", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--flag-factor", type=float)
    p.add_argument("--margin-mm", type=float)
    p.add_argument("--emit-surface", help="write division lattices as JSON")
    _add_config(p)
    p.set_defaults(func=cmd_divide)

    p = sub.add_parser("evaluate", help="score boxes against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--pre-boxes", help="undivided boxes for the pre-division table")
    p.add_argument("--coverage", type=float)
    p.add_argument("--out")
    p.add_argument("--figures", help="directory for outcome figures")
    _add_config(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="end-to-end pipeline")
    p.add_argument("--volume", required=True)
    p.add_argument("--detections")
    p.add_argument("--synthetic", action="store_true", help="draw detections from --gt")
    p.add_argument("--gt")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figures", help="directory for diagnostic figures")
    p.add_argument("--coverage", type=float)
    p.add_argument("--flag-factor", type=float)
    _add_noise(p)
    _add_match(p)
    _add_slicing(p)
    _add_config(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export-slices", help="write slices as PGM with box outlines")
    p.add_argument("--volume", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--boxes")
    p.add_argument("--axis", choices=("axial", "sagittal", "both"), default="axial")
    p.add_argument("--every", type=int, default=1)
    p.set_defaults(func=cmd_export_slices)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"toothbox: {exc}", file=sys.stderr)
        return 2
    except (OSError, ConfigError, VolumeFormatError, DetectionFormatError, PhantomSpecError,
            ValueError, KeyError) as exc:
        print(f"toothbox: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
