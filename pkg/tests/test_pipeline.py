import json

import pytest

from toothbox.config import PipelineConfig
from toothbox.detections import save_detections, synth_detect
from toothbox.phantom import save_json
from toothbox.pipeline import StageError, run_pipeline, run_to_dir
from toothbox.volume import save_volume


@pytest.fixture
def files(tmp_path, phantom_factory):
    ph = phantom_factory(21)
    save_volume(ph.volume, tmp_path / "p.vol")
    save_json(ph.ground_truth, tmp_path / "gt.json")
    return tmp_path, ph


def test_clean_run_counts_and_config_echo(files):
    d, ph = files
    cfg = PipelineConfig(seed=4)
    res = run_to_dir(d / "p.vol", d / "out", cfg, gt_path=d / "gt.json", synthetic=True)
    assert len(res.boxes) == len(ph.ground_truth.teeth)
    report = json.loads((d / "out" / "report.json").read_text())
    echoed = report["config"]
    assert echoed["seed"] == 4
    # the resolved match weights are echoed, not the unset defaults
    step_mm = report["slab"]["step"] * ph.volume.spacing[2]
    assert echoed["match"]["gamma_mm"] == pytest.approx(step_mm)
    assert echoed["match"]["w1"] == pytest.approx(1 / (4 * step_mm))
    assert report["inputs"] == {"volume": "p.vol", "detections": "synthetic", "ground_truth": "gt.json"}
    assert report["evaluation"]["pre_division"]["single_tooth"] == len(ph.ground_truth.teeth)
    assert sorted(p.name for p in (d / "out").iterdir()) == ["boxes.json", "detections.jsonl", "report.json",
                                                            "report.tsv"]
    tsv = (d / "out" / "report.tsv").read_text()
    assert "single_tooth" in tsv and "good_reconstruction" in tsv


def test_detections_file_run(files):
    d, ph = files
    res = run_pipeline(ph.volume, PipelineConfig(), synth_detect(ph.ground_truth, range(ph.volume.dims[2])))
    assert res.evaluation is None and len(res.boxes) == len(ph.ground_truth.teeth)
    save_detections(res.detections, d / "d.jsonl")
    res2 = run_to_dir(d / "p.vol", d / "out", PipelineConfig(), detections_path=d / "d.jsonl")
    assert [b.to_dict() for b in res2.boxes] == [b.to_dict() for b in res.boxes]
    assert not (d / "out" / "report.tsv").exists()


def test_reproducible_bytes(files):
    d, _ = files
    cfg = PipelineConfig.from_dict({"seed": 7, "noise": {"dropout": 0.1, "center_jitter": 1.0,
                                                         "spurious_rate": 0.5}})
    for name in ("a", "b"):
        run_to_dir(d / "p.vol", d / name, cfg, gt_path=d / "gt.json", synthetic=True)
    for f in ("boxes.json", "report.json", "report.tsv", "detections.jsonl"):
        assert (d / "a" / f).read_bytes() == (d / "b" / f).read_bytes()


def test_stage_errors(files):
    d, ph = files
    with pytest.raises(StageError) as info:
        run_to_dir(d / "missing.vol", d / "out", detections_path=d / "x")
    assert info.value.stage == "load" and "missing.vol" in str(info.value)
    with pytest.raises(StageError) as info:
        run_pipeline(ph.volume, PipelineConfig(), synthetic=True)
    assert info.value.stage == "detect"


def test_partial_artifacts_removed(files):
    d, _ = files
    # a file where the figure directory should go makes the last stage fail
    (d / "figs").write_text("in the way")
    with pytest.raises(StageError) as info:
        run_to_dir(d / "p.vol", d / "out", gt_path=d / "gt.json", synthetic=True, figures_dir=d / "figs")
    assert info.value.stage == "figures"
    assert list((d / "out").iterdir()) == []


def test_threads_do_not_change_output(tmp_path):
    from scenarios import fused_phantom

    ph = fused_phantom(2)
    one = run_pipeline(ph.volume, PipelineConfig(), gt=ph.ground_truth, synthetic=True)
    four = run_pipeline(ph.volume, PipelineConfig(threads=4), gt=ph.ground_truth, synthetic=True)
    assert one.division.divided and [b.to_dict() for b in one.boxes] == [b.to_dict() for b in four.boxes]
