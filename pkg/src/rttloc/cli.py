"""Command-line entry point.

Subcommands: simulate | train | localize | evaluate | ablate | serve.
Options can come from a JSON config file (--config, or the RTTLOC_CONFIG
environment variable); explicit flags win over the config file. Exit codes:
0 success, 2 usage error, 3 data/validation error.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from rttloc.corruption import CorruptionConfig
from rttloc.dae import TrainConfig, load_store, save_store, train_registry
from rttloc.data import load_scans, load_testbed, save_scans, save_testbed
from rttloc.errors import ParseError, ValidationError
from rttloc.evaluate import Trial, evaluate, trials_from_records
from rttloc.localizer import localize_multi
from rttloc.pipeline import (
    ABLATION_AXES,
    ScenarioConfig,
    apply_axis,
    group_training_records,
    run_scenario,
)
from rttloc.sim import PRESET_NAMES, SimConfig, Simulator, make_preset

CONFIG_ENV_VAR = "RTTLOC_CONFIG"

EXIT_DATA_ERROR = 3


def data_errors_exit(f):
    """Map validation/parse failures to exit code 3."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ValidationError, ParseError, FileNotFoundError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_DATA_ERROR)

    return wrapper


def load_config_file(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid config JSON: {e}") from None


def _setting(flag, config: dict, section: str, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    if flag is not None:
        return flag
    return config.get(section, {}).get(key, default)


def _train_config(config: dict, seed: int, **flags) -> TrainConfig:
    t = config.get("train", {})
    c = config.get("corruption", {})
    corruption = CorruptionConfig(
        p_silence=flags.get("p_silence")
        if flags.get("p_silence") is not None
        else c.get("p_silence", 0.1),
        sigma_gauss=flags.get("sigma_gauss")
        if flags.get("sigma_gauss") is not None
        else c.get("sigma_gauss", 0.1),
        seed=seed,
    )
    return TrainConfig(
        max_epochs=flags.get("max_epochs") or t.get("max_epochs", 3000),
        patience=flags.get("patience") or t.get("patience", 50),
        dropout_rate=flags.get("dropout")
        if flags.get("dropout") is not None
        else t.get("dropout_rate", 0.30),
        learning_rate=flags.get("learning_rate") or t.get("learning_rate", 2.0),
        val_fraction=flags.get("val_fraction") or t.get("val_fraction", 0.2),
        hidden_dim=flags.get("hidden_dim") or t.get("hidden_dim"),
        corruption=corruption,
        seed=seed,
    )


def _resolve_seed(flag, config: dict) -> int:
    if flag is not None:
        return flag
    return int(config.get("seed", 0))


@click.group()
def main() -> None:
    """Device-free multi-person indoor localization from WiFi RTT fingerprints."""


@main.command()
@click.option("--preset", type=click.Choice(PRESET_NAMES), default="testbed1", show_default=True)
@click.option("--scans-per-point", type=int, default=None, help="Training scans per reference point.")
@click.option("--test-scans-per-point", type=int, default=None, help="Held-out scans per test point.")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@data_errors_exit
def simulate(preset, scans_per_point, test_scans_per_point, seed, config_path, out_dir) -> None:
    """Generate a synthetic dataset: testbed.json, train.csv, test.csv."""
    config = load_config_file(config_path)
    seed = _resolve_seed(seed, config)
    scans_per_point = _setting(scans_per_point, config, "sim", "scans_per_point", 100)
    test_scans_per_point = _setting(
        test_scans_per_point, config, "sim", "test_scans_per_point", 20
    )
    if scans_per_point < 1:
        raise click.UsageError("--scans-per-point must be >= 1")

    p = make_preset(preset)
    sim_overrides = {
        k: v for k, v in config.get("sim", {}).items()
        if k not in ("scans_per_point", "test_scans_per_point")
    }
    sim = Simulator(SimConfig(testbed=p.testbed, seed=seed, **sim_overrides))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_testbed(out / "testbed.json", p.testbed)
    save_scans(out / "train.csv", sim.generate_dataset(scans_per_point), p.testbed.k)
    if test_scans_per_point > 0:
        save_scans(
            out / "test.csv",
            sim.generate_scans_at(p.test_points, test_scans_per_point),
            p.testbed.k,
        )
    click.echo(f"wrote dataset for {preset} (K={p.testbed.k}) to {out}")


@main.command()
@click.option("--scans", "scans_path", type=click.Path(), required=True)
@click.option("--testbed", "testbed_path", type=click.Path(), required=True)
@click.option("--out", "store_path", type=click.Path(), required=True)
@click.option("--subset", default=None, help="Comma-separated reference point ids to train.")
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--dropout", type=float, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--hidden-dim", type=int, default=None)
@click.option("--val-fraction", type=float, default=None)
@click.option("--p-silence", type=float, default=None)
@click.option("--sigma-gauss", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@data_errors_exit
def train(scans_path, testbed_path, store_path, subset, config_path, seed, **flags) -> None:
    """Fit the normalizer and train one autoencoder per reference point."""
    config = load_config_file(config_path)
    seed = _resolve_seed(seed, config)
    cfg = _train_config(config, seed, **flags)

    testbed = load_testbed(testbed_path)
    records = load_scans(scans_path, k=testbed.k)
    subset_ids = [int(s) for s in subset.split(",")] if subset else None
    grouped = group_training_records(records, testbed, subset=subset_ids)
    registry = train_registry(grouped, cfg)
    save_store(store_path, registry)
    click.echo(f"trained {registry.m} models (K={registry.k}) -> {store_path}")


@main.command()
@click.option("--store", "store_path", type=click.Path(), required=True)
@click.option("--scans", "scans_path", type=click.Path(), required=True)
@click.option("--tau", type=float, default=None)
@click.option("--k-neighbors", type=int, default=None)
@click.option("--n-expected", type=int, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--group-size", type=int, default=None, help="Scans aggregated per estimate.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@data_errors_exit
def localize(store_path, scans_path, tau, k_neighbors, n_expected, sigma, group_size, config_path) -> None:
    """Localize online scans; one JSON line of detections per trial."""
    config = load_config_file(config_path)
    tau = _setting(tau, config, "localize", "tau")
    k_neighbors = _setting(k_neighbors, config, "localize", "k_neighbors", 3)
    n_expected = _setting(n_expected, config, "localize", "n_expected")
    sigma = _setting(sigma, config, "localize", "sigma")
    group_size = _setting(group_size, config, "localize", "group_size", 1)

    registry = load_store(store_path)
    records = load_scans(scans_path, k=registry.k)
    for start in range(0, len(records), group_size):
        chunk = [r.state for r in records[start : start + group_size]]
        est = localize_multi(
            registry, chunk, tau=tau, k_neighbors=k_neighbors,
            n_expected=n_expected, sigma=sigma,
        )
        click.echo(json.dumps({
            "detections": [
                {
                    "ref_point_id": d.ref_point_id,
                    "x": d.position[0],
                    "y": d.position[1],
                    "score": d.score,
                }
                for d in est.detected
            ],
            "threshold_used": est.threshold_used,
        }, sort_keys=True))


@main.command()
@click.option("--store", "store_path", type=click.Path(), required=True)
@click.option("--scans", "scans_path", type=click.Path(), required=True)
@click.option("--testbed", "testbed_path", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--tau", type=float, default=None)
@click.option("--k-neighbors", type=int, default=None)
@click.option("--n-expected", type=int, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@data_errors_exit
def evaluate_cmd(store_path, scans_path, testbed_path, out_dir, tau, k_neighbors, n_expected, sigma, config_path) -> None:
    """Score labeled test scans; emits a summary table, report.json, cdf.csv."""
    config = load_config_file(config_path)
    tau = _setting(tau, config, "localize", "tau")
    k_neighbors = _setting(k_neighbors, config, "localize", "k_neighbors", 3)
    n_expected = _setting(n_expected, config, "localize", "n_expected")
    sigma = _setting(sigma, config, "localize", "sigma")

    registry = load_store(store_path)
    testbed = load_testbed(testbed_path)
    records = load_scans(scans_path, k=registry.k)
    trials = trials_from_records(records)
    diagonal = float(np.hypot(testbed.width, testbed.height))
    report = evaluate(
        registry, trials, diagonal=diagonal, tau=tau,
        k_neighbors=k_neighbors, n_expected=n_expected, sigma=sigma,
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.cdf_to_csv(out / "cdf.csv")
    click.echo(report.format_table())


main.add_command(evaluate_cmd, name="evaluate")


@main.command()
@click.option("--axis", type=click.Choice(ABLATION_AXES), required=True)
@click.option("--values", required=True, help="Comma-separated sweep values.")
@click.option("--preset", type=click.Choice(PRESET_NAMES), default="testbed1", show_default=True)
@click.option("--scans-per-point", type=int, default=None)
@click.option("--test-scans-per-point", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@data_errors_exit
def ablate(axis, values, preset, scans_per_point, test_scans_per_point, max_epochs, seed, config_path, out_dir) -> None:
    """Sweep one knob, re-running simulate/train/evaluate per value."""
    config = load_config_file(config_path)
    seed = _resolve_seed(seed, config)
    value_list = [float(v) for v in values.split(",") if v.strip() != ""]
    if not value_list:
        raise click.UsageError("--values must name at least one sweep value")

    base = ScenarioConfig(
        preset=preset,
        seed=seed,
        scans_per_point=_setting(scans_per_point, config, "sim", "scans_per_point", 50),
        test_scans_per_point=_setting(
            test_scans_per_point, config, "sim", "test_scans_per_point", 20
        ),
        train=_train_config(config, seed, max_epochs=max_epochs),
        tau=config.get("localize", {}).get("tau"),
        k_neighbors=config.get("localize", {}).get("k_neighbors", 3),
        sigma=config.get("localize", {}).get("sigma"),
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for value in value_list:
        cfg = apply_axis(base, axis, value)
        report, _ = run_scenario(cfg)
        point_dir = out / f"{axis}={value:g}"
        point_dir.mkdir(parents=True, exist_ok=True)
        report.to_json(point_dir / "report.json")
        report.cdf_to_csv(point_dir / "cdf.csv")
        summary[f"{value:g}"] = report.summary
        click.echo(f"{axis}={value:g}: median={report.summary['median']:.2f}m")
    with open(out / "summary.json", "w") as f:
        json.dump({"axis": axis, "points": summary}, f, sort_keys=True)
        f.write("\n")


@main.command()
@click.option("--store", "store_path", type=click.Path(), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@data_errors_exit
def serve(store_path, host, port) -> None:
    """Run the localization HTTP service over a trained model store."""
    import uvicorn

    from rttloc.service import create_app

    app = create_app(store_path)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
