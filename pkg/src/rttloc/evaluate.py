"""Evaluation harness: localization error per trial, multi-person assignment,
nearest-rank percentile summaries, and CDF export.

Multi-person trials need a pairing rule between estimates and ground truths;
minimum-cost one-to-one assignment (Hungarian) is used, with any unmatched
truth scored as a miss at the testbed diagonal length. Percentiles use the
nearest-rank definition, which is deterministic and trivially checkable
against a sort.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from rttloc.dae import ModelRegistry
from rttloc.data import ScanRecord, StateVector
from rttloc.errors import ValidationError
from rttloc.localizer import localize_multi


def nearest_rank_percentile(errors: Sequence[float], p: float) -> float:
    """p-th percentile by the nearest-rank rule: the ceil(p/100 * n)-th
    smallest value (1-indexed)."""
    if len(errors) == 0:
        raise ValidationError("percentile of an empty error list")
    ordered = sorted(errors)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]


def match_errors(
    estimates: Sequence[tuple[float, float]],
    truths: Sequence[tuple[float, float]],
    miss_cost: float,
) -> list[float]:
    """Per-truth localization errors under minimum-cost one-to-one assignment.

    Truths left unmatched (fewer estimates than persons) score miss_cost;
    surplus estimates are ignored.
    """
    if len(truths) == 0:
        return []
    if len(estimates) == 0:
        return [miss_cost] * len(truths)
    cost = np.array(
        [[math.dist(t, e) for e in estimates] for t in truths]
    )
    rows, cols = linear_sum_assignment(cost)
    errors = {int(r): float(cost[r, c]) for r, c in zip(rows, cols)}
    return [errors.get(i, miss_cost) for i in range(len(truths))]


@dataclass(eq=False)
class ErrorReport:
    errors: list[float]
    summary: dict[str, float]
    cdf: list[tuple[float, float]]

    @classmethod
    def from_errors(cls, errors: Sequence[float]) -> "ErrorReport":
        errors = [float(e) for e in errors]
        if len(errors) == 0:
            raise ValidationError("cannot build a report from zero trials")
        ordered = sorted(errors)
        n = len(ordered)
        summary = {
            "mean": sum(ordered) / n,
            "p25": nearest_rank_percentile(ordered, 25),
            "median": nearest_rank_percentile(ordered, 50),
            "p75": nearest_rank_percentile(ordered, 75),
            "max": ordered[-1],
            "n_trials": float(n),
        }
        cdf = [(ordered[i], (i + 1) / n) for i in range(n)]
        return cls(errors=errors, summary=summary, cdf=cdf)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump({"summary": self.summary, "errors": self.errors}, f, sort_keys=True)
            f.write("\n")

    def cdf_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["error_m", "cum_fraction"])
            for err, frac in self.cdf:
                writer.writerow([repr(err), repr(frac)])

    def format_table(self) -> str:
        s = self.summary
        header = f"{'Trials':>8} {'Average':>9} {'25th':>7} {'Median':>7} {'75th':>7} {'Max':>7}"
        row = (
            f"{int(s['n_trials']):>8} {s['mean']:>8.2f}m {s['p25']:>6.2f}m "
            f"{s['median']:>6.2f}m {s['p75']:>6.2f}m {s['max']:>6.2f}m"
        )
        return header + "\n" + row


@dataclass(eq=False)
class Trial:
    """One localization instance: the true person positions and the scans
    captured while they stood there."""

    truths: list[tuple[float, float]]
    scans: list[StateVector]


def trials_from_records(records: Sequence[ScanRecord]) -> list[Trial]:
    """Each labeled CSV row becomes one single-person, single-scan trial."""
    trials = []
    for rec in records:
        if math.isnan(rec.x) or math.isnan(rec.y):
            raise ValidationError("evaluation scans must carry ground-truth positions")
        trials.append(Trial(truths=[(rec.x, rec.y)], scans=[rec.state]))
    return trials


def evaluate(
    registry: ModelRegistry,
    trials: Sequence[Trial],
    diagonal: float,
    tau: float | None = None,
    k_neighbors: int = 3,
    n_expected: int | None = None,
    sigma: float | None = None,
) -> ErrorReport:
    """Localize every trial and summarize the per-person errors.

    `diagonal` is the testbed diagonal length, used as the miss cost for
    undetected persons.
    """
    all_errors: list[float] = []
    for trial in trials:
        est = localize_multi(
            registry,
            trial.scans,
            tau=tau,
            k_neighbors=k_neighbors,
            n_expected=n_expected if n_expected is not None else len(trial.truths),
            sigma=sigma,
        )
        positions = [d.position for d in est.detected]
        all_errors.extend(match_errors(positions, trial.truths, miss_cost=diagonal))
    return ErrorReport.from_errors(all_errors)
