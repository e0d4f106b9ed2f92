import csv
import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from failcast.cli import main

FLEET_CONFIG = {
    "n_gpus": 32,
    "horizon_days": 10,
    "seed": 21,
    "drift": {"regimes": [
        {"start_day": 0, "name": "A", "base_hazard_per_day": 0.10},
    ]},
}

EXPERIMENT = {
    "kind": "sliding",
    "seed": 4,
    "fleet": FLEET_CONFIG,
    "windowing": {"l": 12, "p": 72, "slide_step": 6},
    "n_bucket": 20,
    "models": {
        "mlp": {"kind": "MLP", "seed": 1,
                "hyperparameters": {"epochs": 4, "hidden": [16, 8]}},
        "gbdt": {"kind": "GBDT", "seed": 2, "hyperparameters": {"n_trees": 20}},
    },
    "weighted": {"mlp": [10, 1]},
    "reports": [
        {"name": "gbdt", "kind": "single", "members": ["gbdt"], "k": 0.05},
        {"name": "par", "kind": "parallel", "members": ["mlp", "gbdt"], "k": 0.05},
    ],
    "sliding": {"t_retrain_days": 2, "l_train_days": 4, "horizon_days": [4, 8]},
}


@pytest.fixture()
def runner():
    return CliRunner()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj))
    return str(path)


def hash_dir(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).iterdir())
            if p.name != "manifest.json"}


def test_generate(tmp_path, runner):
    config = write_json(tmp_path / "fleet.json", FLEET_CONFIG)
    out = tmp_path / "data"
    result = runner.invoke(main, ["generate", "--config", config, "--out", str(out)])
    assert result.exit_code == 0, result.output
    raw_lines = (out / "raw.jsonl").read_text().splitlines()
    assert len(raw_lines) == 1 + 32 * 144 * 10  # header + n_gpus * ticks * days
    assert (out / "inventory.jsonl").exists()
    assert (out / "events.jsonl").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["seed"] == 21


def test_generate_deterministic(tmp_path, runner):
    config = write_json(tmp_path / "fleet.json", FLEET_CONFIG)
    for name in ("a", "b"):
        result = runner.invoke(main, ["generate", "--config", config,
                                      "--out", str(tmp_path / name)])
        assert result.exit_code == 0
    assert hash_dir(tmp_path / "a") == hash_dir(tmp_path / "b")


def test_generate_missing_config(tmp_path, runner):
    result = runner.invoke(main, ["generate", "--config",
                                  str(tmp_path / "nope.json"), "--out",
                                  str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "not found" in result.output


def test_generate_bad_config(tmp_path, runner):
    config = write_json(tmp_path / "fleet.json", {"n_gpus": 4})
    result = runner.invoke(main, ["generate", "--config", config,
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "horizon_days" in result.output


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("gen")
    config = write_json(tmp / "fleet.json", FLEET_CONFIG)
    result = CliRunner().invoke(main, ["generate", "--config", config,
                                       "--out", str(tmp / "data")])
    assert result.exit_code == 0
    return tmp / "data"


def test_prepare(tmp_path, runner, generated):
    out = tmp_path / "prep"
    result = runner.invoke(main, [
        "prepare", "--raw", str(generated / "raw.jsonl"), "--out", str(out),
        "--l", "12", "--p", "72", "--slide-step", "6",
        "--train-days", "0", "4", "--test-days", "4", "8"])
    assert result.exit_code == 0, result.output
    assert (out / "train.jsonl").exists() and (out / "test.jsonl").exists()
    from failcast.dataset import read_instances
    train = read_instances(out / "train.jsonl")
    test = read_instances(out / "test.jsonl")
    assert len(train) > 0 and len(test) > 0
    assert max(train.end_timestamp) < min(test.end_timestamp)


def test_prepare_rejects_overlap(tmp_path, runner, generated):
    result = runner.invoke(main, [
        "prepare", "--raw", str(generated / "raw.jsonl"),
        "--out", str(tmp_path / "prep"),
        "--train-days", "0", "5", "--test-days", "4", "8"])
    assert result.exit_code == 2
    assert "overlap" in result.output


def test_run_and_report(tmp_path, runner):
    config = write_json(tmp_path / "exp.json", EXPERIMENT)
    out = tmp_path / "run"
    result = runner.invoke(main, ["run", "--config", config, "--out", str(out)])
    assert result.exit_code == 0, result.output
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["report"] for r in rows] == ["gbdt", "par"]
    with open(out / "long.csv") as fh:
        long_rows = list(csv.DictReader(fh))
    assert {r["metric"] for r in long_rows} == {"precision_at_k", "recall_at_k",
                                               "accuracy"}
    report = runner.invoke(main, ["report", "--run", str(out)])
    assert report.exit_code == 0
    assert "gbdt" in report.output


def test_run_from_manifest_reproduces(tmp_path, runner):
    config = write_json(tmp_path / "exp.json", EXPERIMENT)
    first = tmp_path / "run1"
    assert runner.invoke(main, ["run", "--config", config,
                                "--out", str(first)]).exit_code == 0
    second = tmp_path / "run2"
    assert runner.invoke(main, ["run", "--config", str(first / "manifest.json"),
                                "--out", str(second)]).exit_code == 0
    assert hash_dir(first) == hash_dir(second)


def test_run_config_errors_enumerated(tmp_path, runner):
    broken = dict(EXPERIMENT, kind="nope",
                  models={"m": {"kind": "RandomForest"}}, reports=[])
    config = write_json(tmp_path / "exp.json", broken)
    result = runner.invoke(main, ["run", "--config", config,
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "kind must be" in result.output
    assert "RandomForest" in result.output  # all violations listed at once
    assert "at least one report" in result.output


def test_unknown_model_kind_names_valid_kinds(tmp_path, runner):
    broken = json.loads(json.dumps(EXPERIMENT))
    broken["models"]["mlp"]["kind"] = "Transformer"
    config = write_json(tmp_path / "exp.json", broken)
    result = runner.invoke(main, ["run", "--config", config,
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "GBDT" in result.output and "LSTM" in result.output


def test_report_on_non_run_dir(tmp_path, runner):
    result = runner.invoke(main, ["report", "--run", str(tmp_path)])
    assert result.exit_code == 2
