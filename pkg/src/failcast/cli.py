"""Command-line entry point: reproducible runs and report emission.

Subcommands: generate (synthetic fleet -> raw dataset), prepare (raw ->
train/test instance files), run (static / sliding / variable-length
experiments -> run directory), report (summarize a run directory).

Every run directory contains exactly one manifest.json carrying the full
config snapshot and root seed; `failcast run --config manifest.json`
reproduces the outputs byte for byte (the manifest's own timestamp is the
only non-deterministic artifact).
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .collection import (join_fleet, read_inventory, read_raw,
                         static_by_serial, streams_from_records,
                         write_inventory, write_raw)
from .dataset import WindowingParams, build_dataset, write_instances
from .evalmetrics import MINUTES_PER_DAY
from .harness import (ExperimentContext, ModelSet, ReportSpec, SlidingConfig,
                      WindowReport, mean_precision, precision_variance,
                      run_sliding, run_static, run_variable_length)
from .models import MODEL_KINDS, ModelSpec
from .telemetry import (DriftSchedule, FleetConfig, Regime, RepairDelay,
                        generate_fleet)
from .util import derive_seed


class ConfigError(click.UsageError):
    """Config schema violation(s); message lists every problem found."""


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise click.UsageError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"{path}: invalid JSON: {exc}") from exc


def parse_fleet_config(obj: dict, seed_override: int | None = None) -> FleetConfig:
    errors = []
    for key in ("n_gpus", "horizon_days", "drift"):
        if key not in obj:
            errors.append(f"missing required field {key!r}")
    if "seed" not in obj and seed_override is None:
        errors.append("missing required field 'seed'")
    if errors:
        raise ConfigError("; ".join(errors))
    regimes = []
    for i, r in enumerate(obj["drift"].get("regimes", [])):
        try:
            start = r["start_day"]
            kwargs = {k: v for k, v in r.items() if k != "start_day"}
            if "signature" in kwargs:
                kwargs["signature"] = dict(kwargs["signature"])
            regimes.append((start, Regime(**kwargs)))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"drift.regimes[{i}]: {exc}")
    if errors:
        raise ConfigError("; ".join(errors))
    kwargs = {}
    if "repair_delay" in obj:
        kwargs["repair_delay"] = RepairDelay(**obj["repair_delay"])
    if "start_minutes" in obj:
        kwargs["start_minutes"] = obj["start_minutes"]
    if "datacenters" in obj:
        kwargs["datacenters"] = tuple(obj["datacenters"])
    try:
        return FleetConfig(
            n_gpus=obj["n_gpus"], horizon_days=obj["horizon_days"],
            seed=seed_override if seed_override is not None else obj["seed"],
            drift=DriftSchedule(regimes=tuple(regimes)), **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_experiment_config(obj: dict) -> dict:
    """Validate and normalize; raises ConfigError listing every violation."""
    if "command" in obj and "config" in obj:  # a manifest; unwrap
        obj = obj["config"]
    errors = []
    kind = obj.get("kind")
    if kind not in ("static", "sliding", "variable_length"):
        errors.append(f"kind must be static|sliding|variable_length, got {kind!r}")
    if "fleet" not in obj and "raw" not in obj:
        errors.append("provide either 'fleet' (inline generator config) or "
                      "'raw'/'inventory' file paths")
    models = {}
    for name, m in obj.get("models", {}).items():
        try:
            models[name] = ModelSpec(kind=m.get("kind"), seed=m.get("seed", 0),
                                     hyperparameters=m.get("hyperparameters", {}))
        except ValueError as exc:
            errors.append(f"models[{name!r}]: {exc}")
    if not models:
        errors.append("at least one model is required")
    reports = []
    for i, r in enumerate(obj.get("reports", [])):
        try:
            spec = ReportSpec(name=r["name"], kind=r["kind"],
                              members=tuple(r["members"]),
                              k=r.get("k", 0.02), k1=r.get("k1", 0.05),
                              k2=r.get("k2", 0.02))
            unknown = set(spec.members) - set(models)
            if unknown:
                errors.append(f"reports[{i}]: unknown members {sorted(unknown)}")
            reports.append(spec)
        except (KeyError, ValueError) as exc:
            errors.append(f"reports[{i}]: {exc}")
    if not reports:
        errors.append("at least one report is required")
    weighted = {}
    for name, pair in obj.get("weighted", {}).items():
        if name not in models:
            errors.append(f"weighted[{name!r}]: no such model")
        else:
            weighted[name] = (float(pair[0]), float(pair[1]))
    if kind == "static" and "train_range" not in obj:
        errors.append("static experiments need 'train_range' [start_day, end_day]")
    sliding = None
    try:
        s = obj.get("sliding", {})
        sliding = SlidingConfig(
            t_retrain_days=s.get("t_retrain_days", 3),
            l_train_days=s.get("l_train_days", 15),
            l_candidates=tuple(s.get("l_candidates", (9, 12, 15))),
            k=s.get("k", 0.02), threshold=s.get("threshold", 0.7),
            horizon_days=tuple(obj.get("horizon", s.get("horizon_days", (30, 60)))),
            selection_report=s.get("selection_report"),
            eval_window_days=s.get("eval_window_days"))
    except (TypeError, ValueError) as exc:
        errors.append(f"sliding: {exc}")
    windowing = None
    try:
        w = obj.get("windowing", {})
        windowing = WindowingParams(l=w.get("l", 18), p=w.get("p", 144),
                                    slide_step=w.get("slide_step", 10))
    except ValueError as exc:
        errors.append(f"windowing: {exc}")
    if errors:
        raise ConfigError("config errors: " + "; ".join(errors))
    return {
        "kind": kind,
        "raw_config": obj,
        "models": ModelSet(specs=models, weighted=weighted),
        "reports": reports,
        "sliding": sliding,
        "windowing": windowing,
        "seed": obj.get("seed", 0),
        "n_bucket": obj.get("n_bucket", 50),
        "train_range": tuple(obj["train_range"]) if "train_range" in obj else None,
        "eval_window_days": obj.get("eval_window_days", 1),
    }


def _write_manifest(out: Path, command: str, config: dict, seed: int,
                    inputs: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_window_reports(path: Path, reports: list[WindowReport]) -> None:
    names = [f.name for f in fields(WindowReport)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in reports:
            writer.writerow([_fmt(getattr(r, n)) for n in names])


def _write_long_table(path: Path, reports: list[WindowReport]) -> None:
    """Plot-ready long format: window, report, metric, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_index", "report", "metric", "value"])
        for r in reports:
            for metric in ("precision_at_k", "recall_at_k", "accuracy"):
                writer.writerow([r.window_index, r.report, metric,
                                 _fmt(getattr(r, metric))])


def _write_summary(path: Path, reports: list[WindowReport],
                   names: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["report", "mean_precision_at_k", "precision_variance",
                         "mean_recall_at_k", "mean_accuracy", "n_windows"])
        for name in names:
            rows = [r for r in reports if r.report == name]
            recalls = [r.recall_at_k for r in rows if r.recall_at_k is not None]
            accs = [r.accuracy for r in rows if r.accuracy is not None]
            has_p = any(r.precision_at_k is not None for r in rows)
            writer.writerow([
                name,
                _fmt(mean_precision(reports, name) if has_p else None),
                _fmt(precision_variance(reports, name) if has_p else None),
                _fmt(sum(recalls) / len(recalls) if recalls else None),
                _fmt(sum(accs) / len(accs) if accs else None),
                len(rows),
            ])


@click.group()
@click.version_option(__version__)
def main():
    """Failure-forecasting experiments on synthetic GPU telemetry."""


@main.command()
@click.option("--config", "config_path", required=True, help="Fleet config JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def generate(config_path, out_dir, seed):
    """Generate a synthetic fleet: raw dataset, inventory, failure log."""
    config = parse_fleet_config(_load_json(config_path), seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fleet = generate_fleet(config)
    rows = join_fleet(fleet.streams, fleet.inventory)
    write_raw(out / "raw.jsonl", rows)
    write_inventory(out / "inventory.jsonl", fleet.inventory)
    with open(out / "events.jsonl", "w") as fh:
        for e in fleet.events:
            fh.write(json.dumps(asdict(e), separators=(",", ":")) + "\n")
    _write_manifest(out, "generate", json.loads(Path(config_path).read_text()),
                    config.seed, {"config": str(config_path)},
                    ["raw.jsonl", "inventory.jsonl", "events.jsonl"])
    click.echo(f"wrote {len(rows)} records for {config.n_gpus} GPUs to {out}")


@main.command()
@click.option("--raw", "raw_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--l", "l_", type=int, default=18, show_default=True)
@click.option("--p", "p_", type=int, default=144, show_default=True)
@click.option("--slide-step", type=int, default=10, show_default=True)
@click.option("--mode", type=click.Choice(["slide", "segment"]), default="slide",
              show_default=True)
@click.option("--train-days", nargs=2, type=float, required=True,
              help="Train split as [start end) days from the stream start.")
@click.option("--test-days", nargs=2, type=float, required=True,
              help="Test split as [start end) days from the stream start.")
def prepare(raw_path, out_dir, l_, p_, slide_step, mode, train_days, test_days):
    """Convert a raw dataset into train/test instance files."""
    if train_days[1] > test_days[0] and test_days[1] > train_days[0]:
        raise click.UsageError("train and test day ranges overlap")
    try:
        params = WindowingParams(l=l_, p=p_, slide_step=slide_step)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    rows = read_raw(raw_path)
    if not rows:
        raise click.UsageError(f"raw dataset {raw_path} is empty")
    streams = streams_from_records(rows)
    origin = min(r.timestamp for r in rows) // MINUTES_PER_DAY * MINUTES_PER_DAY
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for split, (a, b) in (("train", train_days), ("test", test_days)):
        window = (origin + int(a * MINUTES_PER_DAY), origin + int(b * MINUTES_PER_DAY))
        instances = build_dataset(streams, params, window, mode=mode)
        write_instances(out / f"{split}.jsonl", instances)
        outputs.append(f"{split}.jsonl")
        click.echo(f"{split}: {len(instances)} instances "
                   f"({instances.n_positive} positive)")
    _write_manifest(out, "prepare",
                    {"l": l_, "p": p_, "slide_step": slide_step, "mode": mode,
                     "train_days": list(train_days), "test_days": list(test_days)},
                    0, {"raw": str(raw_path)}, outputs)


@main.command(name="run")
@click.option("--config", "config_path", required=True,
              help="Experiment config JSON (or a previous run's manifest.json).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the root seed.")
def run_cmd(config_path, out_dir, seed):
    """Run a static / sliding / variable-length experiment."""
    raw_obj = _load_json(config_path)
    parsed = parse_experiment_config(raw_obj)
    if seed is not None:
        parsed["seed"] = seed
        parsed["raw_config"]["seed"] = seed
    ctx = _build_context(parsed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models, reports = parsed["models"], parsed["reports"]
    sliding = parsed["sliding"]
    if parsed["kind"] == "static":
        results = run_static(ctx, models, reports, parsed["train_range"],
                             sliding.horizon_days,
                             eval_window_days=parsed["eval_window_days"],
                             threshold=sliding.threshold)
        outputs = _emit_run(out, results, [r.name for r in reports])
    elif parsed["kind"] == "sliding":
        results = run_sliding(ctx, models, reports, sliding)
        outputs = _emit_run(out, results, [r.name for r in reports])
    else:
        vl = run_variable_length(ctx, models, reports, sliding)
        outputs = _emit_run(out, vl.reports, [r.name for r in reports])
        _write_window_reports(out / "candidates.csv", vl.candidates)
        with open(out / "chosen_l.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window_index", "chosen_l_days"])
            for i, l in enumerate(vl.chosen_l):
                writer.writerow([i, _fmt(l)])
        outputs += ["candidates.csv", "chosen_l.csv"]
    _write_manifest(out, "run", parsed["raw_config"], parsed["seed"],
                    {"config": str(config_path)}, outputs)
    click.echo(f"run complete: {out}")


def _build_context(parsed: dict) -> ExperimentContext:
    obj = parsed["raw_config"]
    if "fleet" in obj:
        fleet_config = parse_fleet_config(
            obj["fleet"], derive_seed(parsed["seed"], "telemetry")
            if "seed" not in obj["fleet"] else None)
        fleet = generate_fleet(fleet_config)
        streams = fleet.streams
        statics = static_by_serial(fleet.inventory)
        origin = fleet_config.start_minutes
    else:
        rows = read_raw(obj["raw"])
        if "inventory" not in obj:
            raise ConfigError("'raw' input needs an 'inventory' path")
        inventory = read_inventory(obj["inventory"])
        streams = streams_from_records(rows)
        statics = static_by_serial(inventory)
        origin = min(r.timestamp for r in rows) // MINUTES_PER_DAY * MINUTES_PER_DAY
    return ExperimentContext(streams=streams, statics=statics,
                             origin_minutes=origin,
                             windowing=parsed["windowing"],
                             n_bucket=parsed["n_bucket"], seed=parsed["seed"])


def _emit_run(out: Path, results: list[WindowReport], names: list[str]) -> list[str]:
    _write_window_reports(out / "reports.csv", results)
    _write_long_table(out / "long.csv", results)
    _write_summary(out / "summary.csv", results, names)
    return ["reports.csv", "long.csv", "summary.csv"]


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path())
def report(run_dir):
    """Print the summary table of a finished run."""
    summary = Path(run_dir) / "summary.csv"
    if not summary.exists():
        raise click.UsageError(f"{run_dir} has no summary.csv (not a run directory?)")
    with open(summary, newline="") as fh:
        for row in csv.reader(fh):
            click.echo("  ".join(f"{cell:>20}" for cell in row))


def entry() -> int:
    try:
        main.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except Exception as exc:  # runtime failure, not a usage problem
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(entry())
