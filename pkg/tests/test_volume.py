import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toothbox.volume import (HEADER_SIZE, MAGIC, VolumeFormatError, VoxelVolume, from_bytes, load_raw,
                             load_volume, save_raw, save_volume, to_bytes)


def test_zero_volume_from_file(tmp_path):
    path = tmp_path / "z.vol"
    path.write_bytes(MAGIC + struct.pack("<3I3f", 2, 2, 2, 0.5, 0.5, 0.5) + bytes(16))
    vol = load_volume(path)
    assert vol.dims == (2, 2, 2)
    assert vol.spacing == (0.5, 0.5, 0.5)
    assert not vol.data.any()


def test_round_trip_seeded_16(tmp_path):
    rng = np.random.default_rng(7)
    vol = VoxelVolume(rng.integers(-32768, 32767, size=(16, 16, 16), dtype=np.int16), (0.3, 0.4, 0.5))
    save_volume(vol, tmp_path / "v.vol")
    assert load_volume(tmp_path / "v.vol") == vol


def test_payload_order_matches_flat_index():
    data = np.arange(2 * 3 * 4, dtype=np.int16).reshape(4, 3, 2)  # nz=4, ny=3, nx=2
    vol = VoxelVolume(data, (1, 1, 1))
    payload = np.frombuffer(to_bytes(vol)[HEADER_SIZE:], dtype="<i2")
    nx, ny, nz = vol.dims
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                assert payload[x + nx * (y + ny * z)] == data[z, y, x]


def test_single_voxel_file_size(tmp_path):
    vol = VoxelVolume(np.full((1, 1, 1), 100, dtype=np.int16), (1, 1, 1))
    save_volume(vol, tmp_path / "one.vol")
    # 8-byte magic + 3 uint32 + 3 float32 + one int16 voxel
    assert os.path.getsize(tmp_path / "one.vol") == 8 + 12 + 12 + 2


def test_save_twice_identical(tmp_path):
    vol = VoxelVolume(np.arange(27, dtype=np.int16).reshape(3, 3, 3), (0.2, 0.2, 0.2))
    save_volume(vol, tmp_path / "a.vol")
    save_volume(vol, tmp_path / "b.vol")
    assert (tmp_path / "a.vol").read_bytes() == (tmp_path / "b.vol").read_bytes()


def test_truncated_payload(tmp_path):
    vol = VoxelVolume(np.ones((4, 4, 4), dtype=np.int16), (1, 1, 1))
    buf = to_bytes(vol)
    with pytest.raises(VolumeFormatError) as err:
        from_bytes(buf[:-3])
    assert err.value.field == "payload"


@pytest.mark.parametrize("mutate, field", [
    (lambda b: b"XXXXXXXX" + b[8:], "magic"),
    (lambda b: b[:8] + struct.pack("<I", 0) + b[12:], "nx"),
    (lambda b: b[:24] + struct.pack("<f", -1.0) + b[28:], "sy"),
    (lambda b: b[:20], "header"),
])
def test_header_errors_name_field(mutate, field):
    buf = to_bytes(VoxelVolume(np.zeros((2, 2, 2), dtype=np.int16), (1, 1, 1)))
    with pytest.raises(VolumeFormatError) as err:
        from_bytes(mutate(buf))
    assert err.value.field == field


def test_unwritable_destination(tmp_path):
    # a regular file used as a directory fails for every user, root included
    blocker = tmp_path / "ro"
    blocker.write_text("")
    vol = VoxelVolume(np.zeros((1, 1, 1), dtype=np.int16))
    with pytest.raises(OSError, match="ro"):
        save_volume(vol, blocker / "x.vol")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="nothere.vol"):
        load_volume(tmp_path / "nothere.vol")


def test_raw_sidecar_import(tmp_path):
    vol = VoxelVolume(np.arange(24, dtype=np.int16).reshape(2, 3, 4), (0.25, 0.5, 0.75))
    save_raw(vol, tmp_path / "v.raw")
    assert load_raw(tmp_path / "v.raw") == vol


def test_volume_is_immutable():
    vol = VoxelVolume(np.zeros((2, 2, 2), dtype=np.int16))
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 1


@settings(max_examples=60, deadline=None)
@given(
    shape=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
    spacing=st.tuples(*[st.floats(0.01, 5.0, allow_nan=False)] * 3),
    seed=st.integers(0, 2**31 - 1),
)
def test_round_trip_property(shape, spacing, seed):
    data = np.random.default_rng(seed).integers(-32768, 32767, size=shape, dtype=np.int16)
    vol = VoxelVolume(data, spacing)
    assert from_bytes(to_bytes(vol)) == vol
