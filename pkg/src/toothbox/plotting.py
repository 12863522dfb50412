"""Diagnostic figures for pipeline runs (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .evaluation import POST_KEYS, PRE_KEYS  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# fixed metadata keeps PNG bytes stable between identical runs
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_META, bbox_inches="tight")
    plt.close(fig)
    return Path(path)


def plot_profile(profile, slab, slices, path, fraction=0.9):
    """Axial mean profile with the threshold, the slab window and the sampled slices."""
    v = np.asarray(profile)
    thr = v.min() + (1.0 - fraction) * (v.max() - v.min())
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot(np.arange(v.size), v, color="0.2", lw=1.2, label="mean density")
        ax.axhline(thr, color="tab:red", lw=0.8, ls="--", label="threshold")
        ax.axvspan(slab[0], slab[1], color="tab:blue", alpha=0.12, label="slab")
        ax.plot(slices, v[slices], "o", ms=2.5, color="tab:blue", label="sampled")
        ax.set_xlabel("axial slice z")
        ax.set_ylabel("mean density")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_outcomes(report, path):
    """Side-by-side bars of the pre- and post-division outcome counts."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3), sharey=True)
        for ax, keys, counts, title in (
            (axes[0], PRE_KEYS, report.pre_division, "before division"),
            (axes[1], POST_KEYS, report.post_division, "after division"),
        ):
            vals = [counts.get(k, 0) for k in keys]
            ax.bar(range(len(keys)), vals, color="0.5")
            ax.set_xticks(range(len(keys)))
            ax.set_xticklabels([k.replace("_", "\n") for k in keys], fontsize=7)
            ax.set_title(title)
        axes[0].set_ylabel("teeth")
        return _save(fig, path)


def plot_axial_boxes(vol, z, boxes, path, gt=None):
    """Axial slice with predicted boxes (and ground truth, dashed) crossing it."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.imshow(vol.axial(z), cmap="gray", origin="upper")
        for b in boxes:
            if b.lo[2] <= z < b.hi[2]:
                ax.add_patch(Rectangle((b.lo[0] - 0.5, b.lo[1] - 0.5), b.hi[0] - b.lo[0], b.hi[1] - b.lo[1],
                                       fill=False, ec="tab:orange", lw=1))
                ax.text(b.lo[0], b.lo[1] - 1, str(b.fdi or b.label), color="tab:orange", fontsize=6)
        for t in (gt.teeth if gt is not None else ()):
            if t.lo[2] <= z < t.hi[2]:
                ax.add_patch(Rectangle((t.lo[0] - 0.5, t.lo[1] - 0.5), t.hi[0] - t.lo[0], t.hi[1] - t.lo[1],
                                       fill=False, ec="tab:cyan", lw=0.8, ls="--"))
        ax.set_title(f"axial slice z={z}")
        ax.set_axis_off()
        return _save(fig, path)


def plot_seam(vol, box, surface, path):
    """Middle sagittal slice of a divided box with its seam."""
    x = (box.lo[0] + box.hi[0]) // 2
    img = vol.sagittal(x)[box.lo[1]:box.hi[1], box.lo[2]:box.hi[2]].T  # rows z, cols y
    seam = surface.z[x - surface.x0, box.lo[1] - surface.y0:box.hi[1] - surface.y0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3, 5))
        ax.imshow(img, cmap="gray", origin="upper", aspect="auto",
                  extent=(box.lo[1] - 0.5, box.hi[1] - 0.5, box.hi[2] - 0.5, box.lo[2] - 0.5))
        ax.plot(np.arange(box.lo[1], box.hi[1]), seam - 0.5, color="tab:red", lw=1.2)
        ax.axhspan(surface.band[0] - 0.5, surface.band[1] + 0.5, color="tab:blue", alpha=0.1)
        ax.set_xlabel("y")
        ax.set_ylabel("z")
        ax.set_title(f"box {box.id}, x={x}")
        return _save(fig, path)


def render_run_figures(vol, result, out_dir) -> list:
    """Write the standard figure set of a pipeline run; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_profile(result.profile, result.slab, result.slices, out / "profile.png",
                          result.config.slicing.fraction)]
    mid = (result.slab[0] + result.slab[1]) // 2
    paths.append(plot_axial_boxes(vol, mid, result.boxes, out / "axial_boxes.png"))
    if result.evaluation is not None:
        paths.append(plot_outcomes(result.evaluation, out / "outcomes.png"))
    parents = {b.id: b for b in result.pre_boxes}
    for pid, surface in sorted(result.division.surfaces.items()):
        paths.append(plot_seam(vol, parents[pid], surface, out / f"seam_{pid}.png"))
    return paths
