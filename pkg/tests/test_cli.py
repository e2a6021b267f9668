import json
import math
import subprocess
import sys

import numpy as np
import pytest

from monotone_pwl.cli import contour_grid, main
from monotone_pwl.data import Dataset, write_dataset_csv
from monotone_pwl.model import forward, load_model, save_model

from conftest import linear_model


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth(tmp_path):
    path = tmp_path / "s.csv"
    assert run("generate", "--n", 400, "--seed", 1, "--out", path) == 0
    return path


@pytest.fixture
def trained(tmp_path, synth):
    out = tmp_path / "m.txt"
    assert run("train", "--dataset", synth, "--epochs", 2, "--batch-size", 32, "--out", out) == 0
    return out


class TestGenerate:
    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("generate", "--n", 10000, "--seed", 7, "--out", a) == 0
        assert run("generate", "--n", 10000, "--seed", 7, "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_rows(self, tmp_path):
        assert run("generate", "--n", 0, "--out", tmp_path / "x.csv") == 2

    def test_default_size(self, tmp_path):
        path = tmp_path / "d.csv"
        assert run("generate", "--out", path) == 0
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,label" and len(lines) == 10_001

    def test_adult_needs_paths(self, tmp_path):
        assert run("generate", "--kind", "adult", "--out", tmp_path / "a") == 2


class TestTrain:
    def test_plain_flag_matches_zero_weight(self, tmp_path, synth):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        common = ["train", "--dataset", synth, "--epochs", 2, "--seed", 3]
        assert run(*common, "--penalty-weight", 0, "--out", a) == 0
        assert run(*common, "--plain", "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_dataset(self, tmp_path):
        assert run("train", "--dataset", tmp_path / "nope.csv", "--out", tmp_path / "m") != 0

    def test_outputs(self, trained):
        log_lines = open(str(trained) + ".log.csv").read().splitlines()
        assert log_lines[0] == "epoch,empirical,penalty,mk_1,seconds" and len(log_lines) == 3
        spec = json.load(open(str(trained) + ".spec.json"))
        assert spec["entries"][0]["name"] == "y"
        assert json.load(open(str(trained) + ".summary.json"))["epochs"] == 2

    def test_default_run_logs_fifty_epochs(self, tmp_path):
        data, out = tmp_path / "d.csv", tmp_path / "m.txt"
        assert run("generate", "--out", data) == 0
        assert run("train", "--dataset", data, "--out", out) == 0
        assert len(open(str(out) + ".log.csv").read().splitlines()) == 51

    def test_divergence_exit_code(self, tmp_path, synth):
        out = tmp_path / "m.txt"
        assert run("train", "--dataset", synth, "--learning-rate", 1e200, "--out", out) == 3
        load_model(str(out) + ".last_finite")

    def test_bad_config(self, tmp_path, synth):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("epochs = 1\nbogus_key = 3\n")
        assert run("train", "--dataset", synth, "--config", cfg, "--out", tmp_path / "m") == 2

    def test_flags_override_config(self, tmp_path, synth):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\nepochs = 3\nbatch-size = 50\n")
        out = tmp_path / "m.txt"
        assert run("train", "--dataset", synth, "--config", cfg, "--epochs", 1, "--out", out) == 0
        assert len(open(str(out) + ".log.csv").read().splitlines()) == 2


class TestEvaluate:
    def test_identity_fixture(self, tmp_path, synth):
        model = tmp_path / "id.txt"
        save_model(linear_model([0.0, 1.0]), model)
        out = tmp_path / "r.json"
        assert run("evaluate", "--model", model, "--dataset", synth, "--out", out,
                   "--report-dir", tmp_path / "rep") == 0
        report = json.load(open(out))
        assert report["mk"] == {"y": 1.0} and report["task"] == "regression"
        assert {"mse", "mk_mean", "runtime_seconds", "resolution"} <= set(report)
        assert (tmp_path / "rep" / "mk.csv").read_text().splitlines() == ["feature,mk", "y,1.0"]

    def test_task_mismatch(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.random((20, 2))
        y = (X[:, 1] > 0.5).astype(float)
        data = tmp_path / "c.csv"
        write_dataset_csv(Dataset(X, y, "classification", ["x", "y"]), data)
        model = tmp_path / "reg.txt"
        save_model(linear_model([0.0, 1.0]), model)
        assert run("evaluate", "--model", model, "--dataset", data, "--out", tmp_path / "r.json") == 2

    def test_classification_fields(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.random((30, 2))
        y = (X[:, 1] > 0.5).astype(float)
        data = tmp_path / "c.csv"
        write_dataset_csv(Dataset(X, y, "classification", ["x", "y"]), data)
        model = tmp_path / "cls.txt"
        save_model(linear_model([0.0, 4.0], output="sigmoid"), model)
        out = tmp_path / "r.json"
        assert run("evaluate", "--model", model, "--dataset", data, "--out", out) == 0
        report = json.load(open(out))
        assert report["auc"] == 1.0 and "cross_entropy" in report

    def test_missing_model(self, tmp_path, synth):
        assert run("evaluate", "--model", tmp_path / "none", "--dataset", synth,
                   "--out", tmp_path / "r.json") == 4


class TestContour:
    def test_resolution_three(self, tmp_path):
        out = tmp_path / "c.csv"
        assert run("export-contour", "--target", "--resolution", 3, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x,y,f" and len(lines) == 10

    def test_target_exact(self, tmp_path):
        out = tmp_path / "c.csv"
        assert run("export-contour", "--target", "--resolution", 5, "--out", out) == 0
        for line in out.read_text().splitlines()[1:]:
            x, y, f = map(float, line.split(","))
            assert f == math.sin(x) + math.exp(y)

    def test_grid_is_row_major(self):
        pts = contour_grid(3)
        assert pts[:3].tolist() == [[0.0, 0.0], [0.0, 0.5], [0.0, 1.0]]

    def test_model_grid_matches_forward(self, tmp_path, trained):
        out = tmp_path / "c.csv"
        assert run("export-contour", "--model", trained, "--resolution", 7, "--out", out) == 0
        model = load_model(trained)
        for line in out.read_text().splitlines()[1:]:
            x, y, f = map(float, line.split(","))
            assert abs(f - forward(model, [x, y])[0]) < 1e-12

    def test_wrong_input_dim(self, tmp_path):
        model = tmp_path / "m3.txt"
        save_model(linear_model([1.0, 2.0, 3.0]), model)
        assert run("export-contour", "--model", model, "--out", tmp_path / "c.csv") == 2


class TestTrends:
    def test_single_anchor_linear(self, tmp_path, synth):
        model = tmp_path / "lin.txt"
        save_model(linear_model([0.5, 2.0], b=0.1), model)
        out = tmp_path / "t.csv"
        assert run("export-trends", "--model", model, "--dataset", synth, "--feature", "y",
                   "--anchors", 1, "--out", out) == 0
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert len({r[0] for r in rows}) == 1 and len(rows) == 20
        g = np.array([float(r[2]) for r in rows])
        s = np.array([float(r[3]) for r in rows])
        np.testing.assert_allclose(np.diff(s) / np.diff(g), 2.0, rtol=1e-10)

    def test_same_seed_same_anchors(self, tmp_path, synth, trained):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run("export-trends", "--model", trained, "--dataset", synth, "--feature", "x",
                       "--anchors", 5, "--seed", 11, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_feature(self, tmp_path, synth, trained):
        assert run("export-trends", "--model", trained, "--dataset", synth, "--feature", "zz",
                   "--out", tmp_path / "t.csv") == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "c.csv"
    proc = subprocess.run([sys.executable, "-m", "monotone_pwl", "export-contour", "--target",
                           "--resolution", "2", "--out", str(out)], capture_output=True)
    assert proc.returncode == 0 and len(out.read_text().splitlines()) == 5


def test_unknown_command():
    assert main(["frobnicate"]) == 2
