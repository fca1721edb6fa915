import numpy as np
import pytest

from dtofkit import DenseDepthMap, RelativeDepthMap, SensorSpec
from dtofkit.cli import main
from dtofkit.io import RunConfig, read_dense_depth, read_points, read_report, write_dense_depth

from conftest import smooth_scene


@pytest.fixture
def frame(tmp_path):
    """GT and inverse-relative maps on disk plus a quiet config."""
    gt = smooth_scene(21)
    rel_inv = DenseDepthMap.from_values((1.0 / gt.values).astype(np.float32))
    gt_path = tmp_path / "gt.pfm"
    rel_path = tmp_path / "rel.pfm"
    write_dense_depth(gt, gt_path)
    write_dense_depth(rel_inv, rel_path)
    from dtofkit import SimConfig
    sensor = SensorSpec(noise_rate=0.0, blank_rate=0.0, max_shift_dtof_px=0.0)
    cfg = RunConfig(sensor=sensor, seed=5,
                    sim=SimConfig(spec=sensor, seed=5, region_count_range=(0, 0)))
    cfg_path = tmp_path / "cfg.json"
    cfg.save(cfg_path)
    return tmp_path, gt_path, rel_path, cfg_path


def run_simulate(tmp_path, gt_path, cfg_path, extra=()):
    pts = tmp_path / "points.csv"
    labels = tmp_path / "labels.csv"
    code = main(["simulate", "--gt", str(gt_path), "--config", str(cfg_path),
                 "--out-points", str(pts), "--out-labels", str(labels), *extra])
    assert code == 0
    return pts, labels


class TestSimulateCommand:
    def test_writes_points_and_labels(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        pts_path, labels_path = run_simulate(tmp_path, gt_path, cfg_path)
        pts, lab = read_points(pts_path, 480, 640)
        assert len(pts) > 1000 and lab is None
        _, lab = read_points(labels_path, 480, 640)
        assert lab is not None

    def test_seed_flag_overrides(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        a, _ = run_simulate(tmp_path, gt_path, cfg_path, ["--seed", "99"])
        text_a = a.read_text()
        b, _ = run_simulate(tmp_path, gt_path, cfg_path, ["--seed", "100"])
        assert text_a != b.read_text()

    def test_env_seed(self, frame, monkeypatch):
        tmp_path, gt_path, rel_path, cfg_path = frame
        monkeypatch.setenv("DTOF_SEED", "77")
        a, _ = run_simulate(tmp_path, gt_path, cfg_path)
        text_env = a.read_text()
        monkeypatch.delenv("DTOF_SEED")
        b, _ = run_simulate(tmp_path, gt_path, cfg_path, ["--seed", "77"])
        assert text_env == b.read_text()


class TestDetectCommand:
    def test_clean_fixture_flags_nothing(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        pts_path, _ = run_simulate(tmp_path, gt_path, cfg_path)
        out = tmp_path / "kept.csv"
        report = tmp_path / "report.txt"
        code = main(["detect", "--points", str(pts_path), "--rel", str(rel_path),
                     "--rel-inverse", "--out", str(out), "--report", str(report)])
        assert code == 0
        rec = read_report(report)
        assert float(rec["spearman"]) > 0.95
        assert int(rec["flagged"]) == 0
        kept, _ = read_points(out, 480, 640)
        orig, _ = read_points(pts_path, 480, 640)
        assert len(kept) == len(orig)

    def test_missing_file_is_data_error(self, tmp_path):
        code = main(["detect", "--points", str(tmp_path / "nope.csv"),
                     "--rel", str(tmp_path / "nope.pfm"),
                     "--out", str(tmp_path / "o.csv")])
        assert code == 2


class TestCompleteCommand:
    def test_complete_produces_dense_map(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        pts_path, _ = run_simulate(tmp_path, gt_path, cfg_path)
        out = tmp_path / "dense.pfm"
        code = main(["complete", "--points", str(pts_path), "--rel", str(rel_path),
                     "--rel-inverse", "--config", str(cfg_path), "--out", str(out)])
        assert code == 0
        dense = read_dense_depth(out)
        gt = read_dense_depth(gt_path)
        err = np.abs(dense.values - gt.values)
        assert np.median(err) < 0.05  # exact inverse map: near-perfect fit


class TestEvaluateCommand:
    def test_report_contents(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        report = tmp_path / "eval.txt"
        code = main(["evaluate", "--pred", str(gt_path), "--gt", str(gt_path),
                     "--report", str(report)])
        assert code == 0
        rec = read_report(report)
        assert float(rec["delta1"]) == 1.0
        assert float(rec["rmse"]) == 0.0


class TestColorizeCommand:
    def test_colorize(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        out = tmp_path / "vis.png"
        code = main(["colorize", "--in", str(gt_path), "--min", "0.5",
                     "--max", "8.0", "--out", str(out)])
        assert code == 0
        assert out.stat().st_size > 0

    def test_bad_range_is_data_error(self, frame):
        tmp_path, gt_path, rel_path, cfg_path = frame
        code = main(["colorize", "--in", str(gt_path), "--min", "5.0",
                     "--max", "1.0", "--out", str(tmp_path / "v.png")])
        assert code == 2


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert main(["simulate", "--frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert main(["transmogrify"]) == 1

    def test_no_arguments(self):
        assert main([]) == 1
