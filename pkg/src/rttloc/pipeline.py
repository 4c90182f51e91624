"""End-to-end scenario runner: simulate a preset world, train the registry,
and evaluate localization error. This is the machinery behind the `evaluate`
and `ablate` CLI commands and the parameter-sweep studies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from rttloc.dae import ModelRegistry, TrainConfig, train_registry
from rttloc.data import ReferencePoint, ScanRecord, Testbed
from rttloc.errors import ValidationError
from rttloc.evaluate import ErrorReport, Trial, evaluate
from rttloc.sim import Preset, SimConfig, Simulator, make_preset


def group_training_records(
    records: Sequence[ScanRecord], testbed: Testbed, subset: Sequence[int] | None = None
) -> dict[int, tuple[tuple[float, float], list]]:
    """Arrange labeled scans by reference point, keyed for train_registry.
    `subset` restricts training to those reference-point ids."""
    locations = {rp.id: rp.location for rp in testbed.reference_points}
    wanted = set(subset) if subset is not None else None
    grouped: dict[int, tuple[tuple[float, float], list]] = {}
    for rec in records:
        if rec.ref_id < 0:
            continue
        if wanted is not None and rec.ref_id not in wanted:
            continue
        if rec.ref_id not in locations:
            raise ValidationError(f"scan labeled with unknown reference point {rec.ref_id}")
        grouped.setdefault(rec.ref_id, (locations[rec.ref_id], []))[1].append(rec.state)
    if not grouped:
        raise ValidationError("no labeled training scans found")
    return grouped


def _evenly_spaced(items: list, n: int) -> list:
    """Keep n items spread evenly across the original ordering (device lists
    are perimeter-ordered, so this preserves coverage)."""
    if n >= len(items):
        return list(items)
    idx = np.round(np.linspace(0, len(items) - 1, n)).astype(int)
    return [items[i] for i in idx]


@dataclass
class ScenarioConfig:
    preset: str = "testbed1"
    seed: int = 0
    scans_per_point: int = 100
    test_scans_per_point: int = 20
    train: TrainConfig = TrainConfig()
    n_transmitters: int | None = None
    n_receivers: int | None = None
    n_ref_points: int | None = None
    n_persons: int = 1
    n_trials: int = 50  # multi-person trials
    group_size: int = 1  # scans per localization trial
    tau: float | None = None
    k_neighbors: int = 3
    sigma: float | None = None
    sim_overrides: dict | None = None


def _reduced_preset(cfg: ScenarioConfig) -> Preset:
    preset = make_preset(cfg.preset)
    tb = preset.testbed
    transmitters = (
        _evenly_spaced(tb.transmitters, cfg.n_transmitters)
        if cfg.n_transmitters
        else tb.transmitters
    )
    receivers = (
        _evenly_spaced(tb.receivers, cfg.n_receivers) if cfg.n_receivers else tb.receivers
    )
    ref_points = tb.reference_points
    if cfg.n_ref_points and cfg.n_ref_points < len(ref_points):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(9,)))
        keep = sorted(rng.choice(len(ref_points), size=cfg.n_ref_points, replace=False))
        ref_points = [ref_points[i] for i in keep]
    tb = Testbed(
        width=tb.width,
        height=tb.height,
        transmitters=transmitters,
        receivers=receivers,
        reference_points=[ReferencePoint(rp.id, rp.location) for rp in ref_points],
    )
    return Preset(testbed=tb, test_points=preset.test_points)


def run_scenario(cfg: ScenarioConfig) -> tuple[ErrorReport, ModelRegistry]:
    """Simulate, train, and evaluate one parameter setting."""
    preset = _reduced_preset(cfg)
    tb = preset.testbed
    sim_kwargs = dict(cfg.sim_overrides or {})
    sim = Simulator(SimConfig(testbed=tb, seed=cfg.seed, **sim_kwargs))

    train_records = sim.generate_dataset(cfg.scans_per_point)
    grouped = group_training_records(train_records, tb)
    registry = train_registry(grouped, cfg.train)

    trials = make_trials(sim, preset, cfg)
    diagonal = float(np.hypot(tb.width, tb.height))
    report = evaluate(
        registry,
        trials,
        diagonal=diagonal,
        tau=cfg.tau,
        k_neighbors=cfg.k_neighbors,
        n_expected=cfg.n_persons,
        sigma=cfg.sigma,
    )
    return report, registry


def make_trials(sim: Simulator, preset: Preset, cfg: ScenarioConfig) -> list[Trial]:
    """Held-out evaluation trials at the preset's test points."""
    if cfg.n_persons <= 1:
        if cfg.group_size <= 1:
            records = sim.generate_scans_at(preset.test_points, cfg.test_scans_per_point)
            return [Trial(truths=[(r.x, r.y)], scans=[r.state]) for r in records]
        trials = []
        for pi, point in enumerate(preset.test_points):
            for t in range(cfg.test_scans_per_point):
                scans = sim.simulate_trial([point], cfg.group_size, trial_key=pi * 10_000 + t)
                trials.append(Trial(truths=[point], scans=scans))
        return trials

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(8,)))
    points = preset.test_points
    if len(points) < cfg.n_persons:
        raise ValidationError("not enough test points for the requested person count")
    trials = []
    for t in range(cfg.n_trials):
        chosen = rng.choice(len(points), size=cfg.n_persons, replace=False)
        persons = [points[i] for i in sorted(chosen)]
        scans = sim.simulate_trial(persons, max(1, cfg.group_size), trial_key=t)
        trials.append(Trial(truths=persons, scans=scans))
    return trials


ABLATION_AXES = (
    "sigma-gauss",
    "p-silence",
    "dropout",
    "n-transmitters",
    "n-receivers",
    "n-ref-points",
    "n-persons",
)


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """One sweep point: override a single knob of the base scenario."""
    if axis == "sigma-gauss":
        corruption = replace(cfg.train.corruption, sigma_gauss=value)
        return replace(cfg, train=replace(cfg.train, corruption=corruption))
    if axis == "p-silence":
        corruption = replace(cfg.train.corruption, p_silence=value)
        return replace(cfg, train=replace(cfg.train, corruption=corruption))
    if axis == "dropout":
        return replace(cfg, train=replace(cfg.train, dropout_rate=value))
    if axis == "n-transmitters":
        return replace(cfg, n_transmitters=int(value))
    if axis == "n-receivers":
        return replace(cfg, n_receivers=int(value))
    if axis == "n-ref-points":
        return replace(cfg, n_ref_points=int(value))
    if axis == "n-persons":
        return replace(cfg, n_persons=int(value))
    raise ValidationError(f"unknown ablation axis {axis!r}; available: {ABLATION_AXES}")
