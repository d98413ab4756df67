"""End-to-end checks of the bridgeforge command line: exit codes, artifacts,
manifests, schema conformance and worker-count independence."""

import copy
import csv
import hashlib
import json
import os
import subprocess
from pathlib import Path

import jsonschema
import pytest

BIN = os.environ["BRIDGEFORGE_BIN"]
PRESETS = Path(os.environ["BRIDGEFORGE_PRESETS"])

SMALL = {
    "seed": 5,
    "model": {"name": "ou"},
    "grid": {"T": 1.0, "L": 20},
    "endpoint": {"type": "fixed", "y": [1.0]},
    "training": {"batch_size": 40, "iterations": 5, "hidden": [8], "time_features": 2},
    "sampling": {"x0": [[1.0], [-0.5]], "paths_per_start": 5},
    "evaluation": {"n_paths": 100},
    "adjoint_check": {"n_paths": 20000, "L": 100},
}


def run(*args, cwd=None):
    return subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, cwd=cwd, timeout=300)


def write_config(tmp_path, config, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config, indent=2))
    return path


def with_changes(**blocks):
    config = copy.deepcopy(SMALL)
    for key, value in blocks.items():
        config[key] = value
    return config


@pytest.fixture
def trained(tmp_path):
    config = write_config(tmp_path, SMALL)
    out = tmp_path / "run"
    result = run("train", "--config", config, "--out", out)
    assert result.returncode == 0, result.stderr
    return config, out


def test_schema_accepts_presets_and_rejects_typos():
    schema = json.loads((PRESETS / "schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    presets = sorted(p for p in PRESETS.glob("*.json") if p.name != "schema.json")
    assert len(presets) == 7
    for preset in presets:
        validator.validate(json.loads(preset.read_text()))
    validator.validate(SMALL)
    bad = copy.deepcopy(SMALL)
    bad["training"]["learning_rat"] = 0.1
    assert not validator.is_valid(bad)
    bad = copy.deepcopy(SMALL)
    bad["endpoint"] = {"type": "circle", "y": [1.0]}
    assert not validator.is_valid(bad)


def test_config_errors_exit_1_with_line(tmp_path):
    text = json.dumps(SMALL, indent=2).replace('"iterations"', '"iteratoins"')
    path = tmp_path / "typo.json"
    path.write_text(text)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "iteratoins" in l)
    result = run("train", "--config", path)
    assert result.returncode == 1
    assert f"typo.json:{line}: /training/iteratoins: unknown key" in result.stderr


def test_usage_errors_exit_1(tmp_path):
    assert run("train", "--config", tmp_path / "missing.json").returncode == 1
    assert run("fly", "--config", write_config(tmp_path, SMALL)).returncode == 1
    assert run("train").returncode == 1
    assert run("train", "--config", write_config(tmp_path, SMALL), "--workers", "0").returncode == 1


def test_train_artifacts_and_manifest(trained):
    config, out = trained
    manifest = json.loads((out / "train_manifest.json").read_text())
    assert set(manifest) >= {"config_sha256", "seed", "command", "started_at", "wall_time_ms", "artifact_paths"}
    assert manifest["config_sha256"] == hashlib.sha256(config.read_bytes()).hexdigest()
    assert manifest["seed"] == 5
    assert manifest["command"].split()[1:3] == ["train", "--config"]
    for artifact in manifest["artifact_paths"]:
        assert Path(artifact).exists()
    rows = list(csv.reader((out / "train_log.csv").open()))
    assert rows[0] == ["iteration", "loss", "wall_time_ms"]
    assert [int(r[0]) for r in rows[1:]] == list(range(5))


def test_training_is_bitwise_reproducible(tmp_path, trained):
    config, out = trained
    again = tmp_path / "again"
    assert run("train", "--config", config, "--out", again, "--workers", "3").returncode == 0
    assert (out / "checkpoint.bin").read_bytes() == (again / "checkpoint.bin").read_bytes()
    losses = lambda d: [r[1] for r in csv.reader((d / "train_log.csv").open())]
    assert losses(out) == losses(again)
    other = tmp_path / "other"
    assert run("train", "--config", config, "--out", other, "--seed", "6").returncode == 0
    assert (out / "checkpoint.bin").read_bytes() != (other / "checkpoint.bin").read_bytes()


def test_sample_is_independent_of_workers(trained):
    config, out = trained
    ckpt = out / "checkpoint.bin"
    outputs = []
    for workers, name in [(1, "s1"), (4, "s4"), (1, "s1b")]:
        target = out.parent / name
        result = run("sample", "--config", config, "--checkpoint", ckpt, "--out", target, "--workers", workers)
        assert result.returncode == 0, result.stderr
        outputs.append((target / "trajectories.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    rows = list(csv.reader(outputs[0].decode().splitlines()))
    assert rows[0] == ["path", "step", "t", "x_0", "log_weight"]
    assert len(rows) == 1 + 10 * 21
    assert {r[0] for r in rows[1:]} == {str(i) for i in range(10)}
    assert float(rows[1 + 5 * 21][3]) == -0.5


def test_evaluate_writes_reports(trained):
    config, out = trained
    result = run("evaluate", "--config", config, "--out", out)
    assert result.returncode == 0, result.stderr
    summary = json.loads((out / "score_error.json").read_text())
    assert set(summary) == {"time_averaged_mse", "n_paths", "t_cutoff"}
    assert summary["n_paths"] == 100
    assert summary["t_cutoff"] == pytest.approx(0.95)
    rows = list(csv.reader((out / "score_error.csv").open()))
    assert rows[0] == ["t", "mse"]
    assert len(rows) == 1 + 20
    metrics = json.loads((out / "endpoint_metrics.json").read_text())
    assert 0.0 <= metrics["at_T"]["hit_fraction"] <= 1.0
    assert len(metrics["starts"]) == 2


def test_checkpoint_mismatch_is_rejected(tmp_path, trained):
    _, out = trained
    config = write_config(tmp_path, with_changes(model={"name": "ou", "dim": 2}, endpoint={"y": [1.0, 1.0]},
                                                 sampling={"x0": [[0.0, 0.0]]}), "d2.json")
    result = run("sample", "--config", config, "--checkpoint", out / "checkpoint.bin", "--out", tmp_path / "x")
    assert result.returncode == 1
    assert "does not match" in result.stderr


def test_adjoint_check_exit_codes(tmp_path):
    ok = run("adjoint-check", "--config", write_config(tmp_path, SMALL), "--out", tmp_path / "a")
    assert ok.returncode == 0, ok.stdout + ok.stderr
    report = json.loads((tmp_path / "a" / "adjoint_check.json").read_text())
    assert report["passed"] and len(report["checks"]) == 3
    assert report["checks"][0]["estimate"] == pytest.approx(2.718281828459045, abs=1e-12)

    bm = with_changes(model={"name": "brownian"}, endpoint={"y": [0.5]})
    ok = run("adjoint-check", "--config", write_config(tmp_path, bm, "bm.json"), "--out", tmp_path / "b")
    assert ok.returncode == 0, ok.stdout

    strict = with_changes(adjoint_check={"n_paths": 20000, "L": 100, "z_threshold": 1e-9})
    failed = run("adjoint-check", "--config", write_config(tmp_path, strict, "strict.json"), "--out", tmp_path / "c")
    assert failed.returncode == 3
    assert "FAIL" in failed.stdout

    cell = with_changes(model={"name": "cell"}, endpoint={"y": [1.5, 0.2]}, sampling={}, evaluation={})
    unsupported = run("adjoint-check", "--config", write_config(tmp_path, cell, "cell.json"), "--out", tmp_path / "d")
    assert unsupported.returncode == 1
    assert "closed-form" in unsupported.stderr


def test_numerical_failure_exits_2(tmp_path):
    # adjoint OU paths grow like (1 + dt)^L and overflow to infinity
    config = with_changes(grid={"T": 10000.0, "L": 50}, adjoint_check={"n_paths": 100, "L": 200})
    result = run("adjoint-check", "--config", write_config(tmp_path, config), "--out", tmp_path / "n")
    assert result.returncode == 2
    assert "numerical failure" in result.stderr
    assert "path" in result.stderr and "step" in result.stderr
