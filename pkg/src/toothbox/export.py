"""PGM snapshots of axial and sagittal slices with box outlines burnt in."""

from __future__ import annotations

from pathlib import Path

import numpy as np

OUTLINE = 255


def to_gray(image, lo=None, hi=None) -> np.ndarray:
    """Window a density image to 8 bits, leaving 255 free for outlines."""
    img = np.asarray(image, dtype=np.float64)
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.rint(np.clip((img - lo) / (hi - lo), 0.0, 1.0) * (OUTLINE - 1)).astype(np.uint8)


def draw_rect(gray, r0, c0, r1, c1, value=OUTLINE):
    """Outline of the half-open rectangle rows [r0, r1) x cols [c0, c1), clipped."""
    rows, cols = gray.shape
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, rows), min(c1, cols)
    if r0 >= r1 or c0 >= c1:
        return gray
    gray[r0, c0:c1] = value
    gray[r1 - 1, c0:c1] = value
    gray[r0:r1, c0] = value
    gray[r0:r1, c1 - 1] = value
    return gray


def pgm_bytes(gray) -> bytes:
    gray = np.asarray(gray, dtype=np.uint8)
    rows, cols = gray.shape
    return f"P5\n{cols} {rows}\n255\n".encode() + gray.tobytes()


def write_pgm(path, gray) -> None:
    Path(path).write_bytes(pgm_bytes(gray))


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    parts = buf.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: rows * cols], dtype=np.uint8).reshape(rows, cols)


def axial_image(vol, z, boxes=(), lo=None, hi=None) -> np.ndarray:
    """Rows are y, columns x; each box crossing slice z is outlined."""
    gray = to_gray(vol.axial(z), lo, hi)
    for b in boxes:
        if b.lo[2] <= z < b.hi[2]:
            draw_rect(gray, b.lo[1], b.lo[0], b.hi[1], b.hi[0])
    return gray


def sagittal_image(vol, x, boxes=(), lo=None, hi=None) -> np.ndarray:
    """Rows are z (top is superior), columns y; boxes crossing x are outlined."""
    gray = to_gray(vol.sagittal(x).T, lo, hi)
    for b in boxes:
        if b.lo[0] <= x < b.hi[0]:
            draw_rect(gray, b.lo[2], b.lo[1], b.hi[2], b.hi[1])
    return gray


def export_slices(vol, out_dir, boxes=(), axis="axial", every=1, indices=None) -> list:
    """Write one PGM per selected slice and return the paths.

    The density window is shared by every slice so the files are comparable.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lo, hi = float(vol.data.min()), float(vol.data.max())
    paths = []
    axes = ("axial", "sagittal") if axis == "both" else (axis,)
    for ax in axes:
        n = vol.dims[2] if ax == "axial" else vol.dims[0]
        chosen = range(0, n, max(1, int(every))) if indices is None else [i for i in indices if 0 <= i < n]
        for i in chosen:
            img = axial_image(vol, i, boxes, lo, hi) if ax == "axial" else sagittal_image(vol, i, boxes, lo, hi)
            path = out_dir / f"{ax}_{i:04d}.pgm"
            write_pgm(path, img)
            paths.append(path)
    return paths
