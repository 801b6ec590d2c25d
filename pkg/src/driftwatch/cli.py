"""Command-line entry points: serve, replay, simulate, fit-profile,
validate-registry."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ConfigError, ServiceConfig, load_config
from .eventlog import EventLog
from .ingest import (
    TrainingProfile,
    fit_training_profile,
    read_jsonl_file,
    read_training_csv,
)
from .pipeline import Monitor
from .registry import MalformedDocumentError, RegistrySchemaError, load_registry
from .schema import ModelRef, ModelSchema, SchemaError
from .simulate import (
    DEFAULT_ERROR_LEVELS,
    DEFAULT_TRIALS_PER_CELL,
    DEFAULT_UNCERTAINTY_LEVELS,
    run_grid_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MISSING_FILE = 4


@click.group()
def main():
    """Feature-drift monitoring with Bayesian scenario identification."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; DRIFT_* env vars override.")
@click.option("--port", type=int, default=None, help="Override the listen port.")
def serve(config_path, port):
    """Run the long-running HTTP service."""
    from .service import serve as run_service

    try:
        config = load_config(config_path)
        if port is not None:
            config = ServiceConfig(**{**config.__dict__, "port": port})
        run_service(config)
    except ConfigError as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"invalid config: {exc}"))
    except (RegistrySchemaError, MalformedDocumentError) as exc:
        raise SystemExit(_fail(EXIT_DATA, f"registry rejected: {exc}"))


@main.command()
@click.option("--stream", "stream_path", type=click.Path(), required=True,
              help="JSON-lines observation stream.")
@click.option("--registry", "registry_path", type=click.Path(), required=True)
@click.option("--profile", "profile_path", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=".",
              help="Where event and command logs are written.")
@click.option("--batch-size", type=int, default=100)
def replay(stream_path, registry_path, profile_path, config_path, out_dir, batch_size):
    """Deterministic offline run of the full pipeline over a recorded stream."""
    code = run_replay(stream_path, registry_path, profile_path, config_path,
                      out_dir, batch_size)
    raise SystemExit(code)


def run_replay(stream_path, registry_path, profile_path, config_path=None,
               out_dir=".", batch_size=100, http_post=None) -> int:
    for path in (stream_path, registry_path, profile_path):
        if not Path(path).exists():
            return _fail(EXIT_MISSING_FILE, f"file not found: {path}")
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"invalid config: {exc}")
    try:
        profile = TrainingProfile.load(profile_path)
    except (KeyError, ValueError, SchemaError) as exc:
        return _fail(EXIT_DATA, f"invalid profile: {exc}")
    try:
        with open(registry_path, "rb") as fh:
            registry, reports = load_registry(fh.read(), profile)
    except (MalformedDocumentError, RegistrySchemaError) as exc:
        return _fail(EXIT_DATA, f"registry rejected: {exc}")
    bad = [r for r in reports if not r.ok]
    if bad:
        for report in bad:
            for violation in report.violations:
                click.echo(f"registry: {report.scenario_id}: {violation.field}: "
                           f"{violation.message}", err=True)
        return _fail(EXIT_DATA, "registry has invalid scenarios")
    try:
        stream = read_jsonl_file(stream_path)
    except SchemaError as exc:
        return _fail(EXIT_DATA, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    event_path = out / "replay-events.jsonl"
    if event_path.exists():
        event_path.unlink()
    # the logical clock follows the stream so replays are time-deterministic
    last_ts = {"value": stream[0].ts if stream else 0}
    kwargs = {}
    if http_post is not None:
        kwargs["http_post"] = http_post
    monitor = Monitor(
        profile=profile, registry=registry,
        event_log=EventLog(event_path, clock=lambda: last_ts["value"]),
        config=config.pipeline(),
        command_log_path=out / "replay-commands.jsonl",
        clock=lambda: last_ts["value"],
        **kwargs,
    )
    alerts = decisions = 0
    try:
        for start in range(0, len(stream), batch_size):
            batch = stream[start:start + batch_size]
            last_ts["value"] = batch[-1].ts
            monitor.ingest(batch)
    except (SchemaError, KeyError) as exc:
        return _fail(EXIT_DATA, f"stream rejected: {exc}")
    finally:
        monitor.event_log.close()
    alerts = len(monitor.alerts(limit=10**9))
    decisions = len(monitor.decisions(limit=10**9))
    click.echo(json.dumps({
        "rows": len(stream), "alerts": alerts, "decisions": decisions,
        "events": str(event_path),
    }))
    return EXIT_OK


@main.command()
@click.option("--trials", type=int, default=DEFAULT_TRIALS_PER_CELL, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threshold", type=float, default=5.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default="accuracy-grid.csv",
              show_default=True)
@click.option("--manifest", "manifest_path", type=click.Path(),
              default="accuracy-grid-manifest.json", show_default=True)
def simulate(trials, seed, threshold, out_path, manifest_path):
    """Run the accuracy grid over estimate error x estimate uncertainty."""
    grid = run_grid_experiment(
        error_levels=DEFAULT_ERROR_LEVELS,
        uncertainty_levels=DEFAULT_UNCERTAINTY_LEVELS,
        trials_per_cell=trials, threshold=threshold, seed=seed,
    )
    grid.save(out_path, manifest_path)
    for row in grid.rows():
        click.echo(f"error={row['error_level']:<5} uncertainty={row['uncertainty_level']:<5} "
                   f"accuracy={row['accuracy']:.3f} ({row['successes']}/{row['trials']})")
    click.echo(f"grid written to {out_path}, manifest to {manifest_path}")


@main.command("fit-profile")
@click.option("--data", "data_path", type=click.Path(), required=True,
              help="Training data: CSV with header or JSON-lines observations.")
@click.option("--schema", "schema_path", type=click.Path(), required=True,
              help='JSON {"features": {name: kind}, "monitor_prediction": bool}.')
@click.option("--model", required=True)
@click.option("--version", default="1.0", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--reservoir", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def fit_profile(data_path, schema_path, model, version, out_path, reservoir, seed):
    """Compute the training profile used as the no-drift baseline."""
    for path in (data_path, schema_path):
        if not Path(path).exists():
            raise SystemExit(_fail(EXIT_MISSING_FILE, f"file not found: {path}"))
    try:
        with open(schema_path, encoding="utf-8") as fh:
            schema = ModelSchema.from_json(json.load(fh))
        ref = ModelRef(model, version)
        if data_path.endswith(".csv"):
            rows = read_training_csv(data_path, schema, ref)
        else:
            rows = read_jsonl_file(data_path)
        profile = fit_training_profile(rows, schema, ref,
                                       reservoir_size=reservoir, seed=seed)
    except (SchemaError, ValueError, KeyError) as exc:
        raise SystemExit(_fail(EXIT_DATA, str(exc)))
    profile.save(out_path)
    click.echo(f"profile for {ref.key} over {profile.n_rows} rows written to {out_path}")


@main.command("validate-registry")
@click.option("--registry", "registry_path", type=click.Path(), required=True)
@click.option("--profile", "profile_path", type=click.Path(), required=True)
def validate_registry(registry_path, profile_path):
    """Parse and validate a scenario registry against a training profile."""
    for path in (registry_path, profile_path):
        if not Path(path).exists():
            raise SystemExit(_fail(EXIT_MISSING_FILE, f"file not found: {path}"))
    try:
        profile = TrainingProfile.load(profile_path)
        with open(registry_path, "rb") as fh:
            _, reports = load_registry(fh.read(), profile)
    except (MalformedDocumentError, RegistrySchemaError) as exc:
        raise SystemExit(_fail(EXIT_DATA, str(exc)))
    ok = True
    for report in reports:
        if report.ok:
            click.echo(f"{report.scenario_id}: ok")
        else:
            ok = False
            for violation in report.violations:
                click.echo(f"{report.scenario_id}: {violation.field}: {violation.message}")
    raise SystemExit(EXIT_OK if ok else EXIT_DATA)


def _fail(code: int, message: str) -> int:
    click.echo(f"error: {message}", err=True)
    return code


if __name__ == "__main__":
    main()
