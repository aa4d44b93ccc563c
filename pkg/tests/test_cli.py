"""CLI contract: subcommands, exit codes, stdout JSON, no-retraining hash."""

import hashlib
import json

import numpy as np
import pytest

from protoforge.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    out = json.loads(captured.out) if captured.out.strip() else None
    return code, out, captured.err


@pytest.fixture()
def linear_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(300, 2))
    y = 2 * X[:, 0] - X[:, 1] + 0.05 * rng.normal(size=300)
    p = tmp_path / "data.csv"
    lines = ["a,b,y"] + [f"{r[0]},{r[1]},{v}" for r, v in zip(X, y)]
    p.write_text("\n".join(lines) + "\n")
    return p


@pytest.fixture()
def trained(tmp_path, linear_csv, capsys):
    model = tmp_path / "m.json"
    code, out, _ = run_cli(
        capsys, "train", "--data", str(linear_csv), "--targets", "y",
        "--out", str(model), "--epochs", "60", "--hidden", "8", "--dropout", "0.2",
        "--seed", "3",
    )
    assert code == 0
    return model, linear_csv


class TestTrain:
    def test_smoke_prints_final_loss(self, tmp_path, linear_csv, capsys):
        model = tmp_path / "m.json"
        code, out, err = run_cli(
            capsys, "train", "--data", str(linear_csv), "--targets", "y",
            "--out", str(model), "--epochs", "20", "--hidden", "4",
        )
        assert code == 0
        assert model.exists()
        assert "final_loss" in out
        assert "final training loss" in err

    def test_unknown_target_exit_2(self, linear_csv, capsys):
        code, _, err = run_cli(capsys, "train", "--data", str(linear_csv), "--targets", "nope")
        assert code == 2
        assert "unknown target" in err

    def test_usage_error_exit_1(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["train"])  # missing required flags
        assert e.value.code == 1


class TestCalibratePredict:
    def test_calibrate_then_predict(self, tmp_path, trained, capsys):
        model, csv_path = trained
        calib = tmp_path / "c.json"
        code, out, _ = run_cli(
            capsys, "calibrate", "--model", str(model), "--data", str(csv_path),
            "--method", "confmc", "--alpha", "0.2", "--K", "64", "--out", str(calib),
        )
        assert code == 0 and calib.exists()
        code, out, _ = run_cli(
            capsys, "predict", "--model", str(model), "--calibration", str(calib),
            "--x", "0.5,-0.5",
        )
        assert code == 0
        assert out["intervals"][0]["lower"] <= out["point"][0] <= out["intervals"][0]["upper"]
        # raw-unit sanity: y = 2a - b around (0.5, -0.5) -> 1.5
        assert abs(out["point"][0] - 1.5) < 0.3

    def test_recalibration_leaves_model_hash_unchanged(self, tmp_path, trained, capsys):
        model, csv_path = trained
        before = hashlib.sha256(model.read_bytes()).hexdigest()
        for alpha in ("0.2", "0.1"):
            code, _, _ = run_cli(
                capsys, "calibrate", "--model", str(model), "--data", str(csv_path),
                "--method", "confmc", "--alpha", alpha, "--K", "64",
                "--out", str(tmp_path / f"c{alpha}.json"),
            )
            assert code == 0
        assert hashlib.sha256(model.read_bytes()).hexdigest() == before

    def test_hash_mismatch_exit_2(self, tmp_path, trained, capsys):
        model, csv_path = trained
        calib = tmp_path / "c.json"
        run_cli(
            capsys, "calibrate", "--model", str(model), "--data", str(csv_path),
            "--method", "cp", "--out", str(calib),
        )
        d = json.loads(model.read_text())
        d["layers"][0]["b"][0] += 1.0
        model.write_text(json.dumps(d))
        code, _, err = run_cli(
            capsys, "predict", "--model", str(model), "--calibration", str(calib), "--x", "0,0"
        )
        assert code == 2
        assert "different model" in err

    def test_bad_vector_exit_2(self, tmp_path, trained, capsys):
        model, csv_path = trained
        calib = tmp_path / "c.json"
        run_cli(capsys, "calibrate", "--model", str(model), "--data", str(csv_path),
                "--method", "cp", "--out", str(calib))
        code, _, _ = run_cli(
            capsys, "predict", "--model", str(model), "--calibration", str(calib), "--x", "a,b"
        )
        assert code == 2


class TestSearch:
    def test_search_from_spec_json(self, tmp_path, trained, capsys):
        model, _ = trained
        spec = tmp_path / "spec.json"
        # maximize y = 2a - b inside the unit box: optimum at a=1, b=-1
        spec.write_text(json.dumps({
            "bounds": [[-1, 1], [-1, 1]],
            "mask": [1, 1],
            "targets": [{"goal": 10.0, "weight": 1.0}],
            "eta": 0.05, "iters": 150, "restarts": 4, "seed": 0,
        }))
        code, out, _ = run_cli(capsys, "search", "--model", str(model), "--spec", str(spec))
        assert code == 0
        assert out["x_final"][0] > 0.9 and out["x_final"][1] < -0.9
        assert out["trajectory"]

    def test_infeasible_spec_exit_2(self, tmp_path, trained, capsys):
        model, _ = trained
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({
            "bounds": [[1, -1], [-1, 1]], "mask": [1, 1], "targets": [{"goal": 1.0}],
        }))
        code, _, err = run_cli(capsys, "search", "--model", str(model), "--spec", str(spec))
        assert code == 2
        assert "infeasible" in err


class TestBench:
    def test_bench_emits_table_shaped_csv(self, tmp_path, linear_csv, capsys):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({
            "dataset": str(linear_csv), "targets": ["y"],
            "methods": ["cp", "mc", "confmc"], "trials": 2,
            "n_total": 120, "n_train": 70, "n_cal": 30, "n_test": 20,
            "K": 32, "master_seed": 0,
            "train": {"epochs": 15, "hidden_layers": [8]},
        }))
        code, out, _ = run_cli(
            capsys, "bench", "--config", str(cfg), "--out-dir", str(tmp_path / "runs"), "--quiet"
        )
        assert code == 0
        summary = (tmp_path / "runs").rglob("summary.csv")
        rows = next(summary).read_text().strip().splitlines()
        assert rows[0] == "method,AEC,AEC_std,AIW,AIW_std"
        assert len(rows) == 4  # header + 3 methods
