import numpy as np

from toothbox.boxes import Box3D
from toothbox.config import PipelineConfig
from toothbox.export import (OUTLINE, axial_image, draw_rect, export_slices, pgm_bytes, read_pgm, sagittal_image,
                             to_gray)
from toothbox.pipeline import run_pipeline
from toothbox.plotting import render_run_figures
from toothbox.volume import VoxelVolume


def small_volume():
    data = np.arange(4 * 5 * 6, dtype=np.int16).reshape(4, 5, 6)
    return VoxelVolume(data, (1.0, 1.0, 1.0))


def test_gray_window_reserves_outline_value():
    g = to_gray(np.array([[0, 5], [10, 20]]))
    assert g.min() == 0 and g.max() == OUTLINE - 1
    assert (to_gray(np.ones((2, 2))) == 0).all()


def test_draw_rect_clips():
    g = draw_rect(np.zeros((5, 5), dtype=np.uint8), 1, 1, 4, 9)
    assert g[1, 1:].tolist() == [OUTLINE] * 4 and g[2, 2] == 0 and g[3, 4] == OUTLINE
    assert draw_rect(np.zeros((3, 3), np.uint8), 5, 5, 6, 6).sum() == 0


def test_pgm_round_trip(tmp_path):
    g = (np.arange(12) * 20).astype(np.uint8).reshape(3, 4)
    assert pgm_bytes(g).startswith(b"P5\n4 3\n255\n")
    (tmp_path / "a.pgm").write_bytes(pgm_bytes(g))
    assert (read_pgm(tmp_path / "a.pgm") == g).all()


def test_images_and_export(tmp_path):
    vol = small_volume()
    box = Box3D(0, (1, 1, 1), (4, 3, 3), 1, vol.spacing)
    ax = axial_image(vol, 2, [box])
    assert ax.shape == (5, 6) and ax[1, 1] == OUTLINE and ax[0, 0] != OUTLINE
    assert (axial_image(vol, 0, [box]) < OUTLINE).all()
    sg = sagittal_image(vol, 2, [box])
    assert sg.shape == (4, 5) and sg[1, 1] == OUTLINE
    paths = export_slices(vol, tmp_path, [box], axis="both", every=2)
    assert [p.name for p in paths] == ["axial_0000.pgm", "axial_0002.pgm", "sagittal_0000.pgm",
                                       "sagittal_0002.pgm", "sagittal_0004.pgm"]
    assert read_pgm(paths[1]).shape == (5, 6)
    assert export_slices(vol, tmp_path / "sel", indices=[1, 99]) == [tmp_path / "sel" / "axial_0001.pgm"]


def test_run_figures(tmp_path):
    from scenarios import fused_phantom

    ph = fused_phantom(1)
    res = run_pipeline(ph.volume, PipelineConfig(), gt=ph.ground_truth, synthetic=True)
    paths = render_run_figures(ph.volume, res, tmp_path / "a")
    names = {p.name for p in paths}
    assert {"profile.png", "axial_boxes.png", "outcomes.png"} <= names
    assert sum(n.startswith("seam_") for n in names) == len(res.division.divided)
    again = render_run_figures(ph.volume, res, tmp_path / "b")
    for p, q in zip(paths, again):
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert p.read_bytes() == q.read_bytes()
