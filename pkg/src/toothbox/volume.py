"""Voxel volumes and the CBCTVOL1 binary container.

Axis convention: x is lateral (sagittal index), y is anterior-posterior and
z is vertical (axial index). Index 0 on z is the most superior slice, so the
maxilla sits at low z and traversal "top-down" means increasing z.

The array is stored as ``data[z, y, x]`` which makes the C-order flat index
``x + nx * (y + ny * z)``, the payload order of the file format.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CBCTVOL1"
_HEADER = struct.Struct("<8s3I3f")
HEADER_SIZE = _HEADER.size  # 32 bytes


class VolumeFormatError(ValueError):
    """Malformed volume file. ``field`` names the offending header field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.int16)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        # float32 precision so the on-disk header round-trips exactly
        spacing = tuple(float(np.float32(s)) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self):
        """(nx, ny, nz)"""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def shape_zyx(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, VoxelVolume):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.data, other.data)

    __hash__ = None

    def axial(self, z):
        """Axial slice at index z as a (y, x) array."""
        return self.data[z]

    def sagittal(self, x):
        """Sagittal slice at index x as a (y, z) array."""
        return self.data[:, :, x].T


def to_bytes(vol: VoxelVolume) -> bytes:
    nx, ny, nz = vol.dims
    header = _HEADER.pack(MAGIC, nx, ny, nz, *vol.spacing)
    return header + vol.data.astype("<i2", copy=False).tobytes(order="C")


def from_bytes(buf: bytes, source="<bytes>") -> VoxelVolume:
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise VolumeFormatError(f"{source}: bad magic, expected {MAGIC!r}", field="magic")
    if len(buf) < HEADER_SIZE:
        raise VolumeFormatError(f"{source}: truncated header ({len(buf)} bytes)", field="header")
    _, nx, ny, nz, sx, sy, sz = _HEADER.unpack_from(buf)
    for name, value in (("nx", nx), ("ny", ny), ("nz", nz)):
        if value < 1:
            raise VolumeFormatError(f"{source}: non-positive dimension {name}={value}", field=name)
    for name, value in (("sx", sx), ("sy", sy), ("sz", sz)):
        if not np.isfinite(value) or value <= 0:
            raise VolumeFormatError(f"{source}: non-positive spacing {name}={value}", field=name)
    expected = 2 * nx * ny * nz
    payload = buf[HEADER_SIZE:]
    if len(payload) < expected:
        raise VolumeFormatError(
            f"{source}: truncated payload, expected {expected} bytes, found {len(payload)}",
            field="payload",
        )
    if len(payload) > expected:
        raise VolumeFormatError(
            f"{source}: {len(payload) - expected} trailing bytes after payload", field="payload"
        )
    data = np.frombuffer(payload, dtype="<i2").reshape(nz, ny, nx)
    return VoxelVolume(data.astype(np.int16), (sx, sy, sz))


def save_volume(vol: VoxelVolume, path) -> None:
    path = Path(path)
    try:
        path.write_bytes(to_bytes(vol))
    except OSError as exc:
        raise OSError(f"cannot write volume to {path}: {exc.strerror or exc}") from exc


def load_volume(path) -> VoxelVolume:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read volume {path}: {exc.strerror or exc}") from exc
    return from_bytes(buf, source=str(path))


def load_raw(raw_path, sidecar_path=None) -> VoxelVolume:
    """Import a headerless int16 LE payload described by a JSON sidecar.

    The sidecar holds ``{"dims": [nx, ny, nz], "spacing": [sx, sy, sz]}`` and
    defaults to ``<raw_path>.json``.
    """
    raw_path = Path(raw_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else Path(str(raw_path) + ".json")
    meta = json.loads(sidecar_path.read_text())
    dtype = meta.get("dtype", "int16")
    if dtype != "int16":
        raise VolumeFormatError(f"{sidecar_path}: unsupported dtype {dtype!r}", field="dtype")
    try:
        nx, ny, nz = (int(v) for v in meta["dims"])
        spacing = tuple(float(v) for v in meta["spacing"])
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"{sidecar_path}: missing or invalid dims/spacing") from exc
    if min(nx, ny, nz) < 0 or len(spacing) != 3:
        raise VolumeFormatError(f"{sidecar_path}: invalid dims/spacing", field="dims")
    header = _HEADER.pack(MAGIC, nx, ny, nz, *spacing)
    return from_bytes(header + raw_path.read_bytes(), source=str(raw_path))


def save_raw(vol: VoxelVolume, raw_path) -> None:
    raw_path = Path(raw_path)
    raw_path.write_bytes(vol.data.astype("<i2", copy=False).tobytes())
    meta = {"dims": list(vol.dims), "spacing": list(vol.spacing), "dtype": "int16"}
    Path(str(raw_path) + ".json").write_text(json.dumps(meta))


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
