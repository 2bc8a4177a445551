import json
from pathlib import Path

import pytest

from mwld.cli import run

FIXTURES = Path(__file__).parent / "fixtures"


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_missing_seed_is_a_usage_error(tmp_path, capsys):
    assert run(["synth", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_no_command_is_a_usage_error(capsys):
    assert run([]) == 2


def test_missing_input_is_a_runtime_error(tmp_path, capsys):
    code = run(["train", "--data", str(tmp_path / "nope.csv"), "--schema", "income",
                "--seed", "1", "--out", str(tmp_path / "o")])
    assert code == 1
    assert "error" in capsys.readouterr().err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run(["synth", "--n", "600", "--seed", "3", "--out", str(out)]) == 0
    return out


def _train(synth_dir, out, *extra):
    return run(["train", "--data", str(synth_dir / "data.csv"), "--schema", str(synth_dir / "two_group.yaml"),
                "--objective", "clv", "--lambda", "0.4", "--eta", "0.001", "--epochs", "3",
                "--seed", "7", "--out", str(out), *extra])


def test_train_is_deterministic(synth_dir, tmp_path, capsys):
    assert _train(synth_dir, tmp_path / "a") == 0
    assert _train(synth_dir, tmp_path / "b") == 0
    assert "config digest:" in capsys.readouterr().out
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    doc = json.loads((tmp_path / "a" / "model.weights.json").read_text())
    assert doc["config"]["objective"] == "clv"
    assert doc["feature_names"][-1] == "(intercept)"


def test_audit_writes_one_report(synth_dir, tmp_path, capsys):
    assert _train(synth_dir, tmp_path / "m") == 0
    args = ["audit", "--data", str(synth_dir / "data.csv"), "--schema", str(synth_dir / "two_group.yaml"),
            "--model", str(tmp_path / "m" / "model.weights.json"), "--ks", "0.1,0.5,1",
            "--shift-trials", "50", "--seed", "7"]
    assert run(args + ["--out", str(tmp_path / "r1")]) == 0
    assert run(args + ["--out", str(tmp_path / "r2")]) == 0
    assert _files(tmp_path / "r1") == _files(tmp_path / "r2")
    report = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert report["metadata"]["rescaling_applied"] is True
    assert report["sections"]["variance_block"]["sandwich"]["holds"]
    assert min(s["min_margin"] for s in report["sections"]["shift_checks"]) >= -1e-9
    capsys.readouterr()
    assert run(["report", "--in", str(tmp_path / "r1" / "report.json")]) == 0
    assert "mwld_by_k: present" in capsys.readouterr().out


def test_audit_on_bundled_schema(tmp_path):
    data = str(FIXTURES / "income.csv")
    assert run(["train", "--data", data, "--schema", "income", "--epochs", "2",
                "--seed", "1", "--out", str(tmp_path / "m")]) == 0
    assert run(["audit", "--data", data, "--schema", "income", "--model", str(tmp_path / "m" / "model.weights.json"),
                "--shift-trials", "20", "--seed", "1", "--out", str(tmp_path / "r")]) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["sections"]["bounds_block"]["T"] <= 30


def test_malformed_model_file(synth_dir, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code = run(["audit", "--data", str(synth_dir / "data.csv"), "--schema", str(synth_dir / "two_group.yaml"),
                "--model", str(bad), "--seed", "1", "--out", str(tmp_path / "r")])
    assert code == 1
    assert "malformed" in capsys.readouterr().err


def test_sweep_is_deterministic(synth_dir, tmp_path):
    args = ["sweep", "--data", str(synth_dir / "data.csv"), "--schema", str(synth_dir / "two_group.yaml"),
            "--lambdas", "0,1", "--epochs", "2", "--seed", "5"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    assert {"report.json", "sweep_lv.csv", "sweep_clv.csv"} <= set(_files(tmp_path / "a"))


def test_report_on_garbage(tmp_path):
    (tmp_path / "x.json").write_text("[]")
    assert run(["report", "--in", str(tmp_path / "x.json")]) == 1
