"""Fingerprint data model, preprocessing, and file formats.

A scan is a K-dimensional state vector of RTT values, one entry per
(transmitter, receiver) pair in transmitter-major order. Pairs absent from a
scan are filled with a fixed placeholder RTT; measured values, including
negative ones, pass through untouched. Normalization is per-dimension min-max
fitted on training data only, with out-of-range online values clamped to [0,1].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from rttloc.errors import ParseError, ValidationError

# RTT placeholder for a pair that produced no measurement: 0.2e-3 ms = 200 ns.
PLACEHOLDER_NS = 200


@dataclass(eq=False)
class StateVector:
    """One scan: K RTT values (ns) plus a per-pair detection mask."""

    values: np.ndarray  # int64, shape (K,)
    detected_mask: np.ndarray  # bool, shape (K,)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.int64)
        self.detected_mask = np.asarray(self.detected_mask, dtype=bool)
        if self.values.shape != self.detected_mask.shape or self.values.ndim != 1:
            raise ValidationError(
                f"values shape {self.values.shape} does not match mask shape {self.detected_mask.shape}"
            )

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateVector):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.detected_mask, other.detected_mask
        )


@dataclass
class ReferencePoint:
    """A surveyed training location with its collected scans."""

    id: int
    location: tuple[float, float]
    scans: list[StateVector] = field(default_factory=list)


@dataclass
class Testbed:
    """2D deployment: device positions and the reference-point grid."""

    width: float
    height: float
    transmitters: list[tuple[float, float]]
    receivers: list[tuple[float, float]]
    reference_points: list[ReferencePoint]

    def __post_init__(self) -> None:
        for name, pts in (
            ("transmitter", self.transmitters),
            ("receiver", self.receivers),
            ("reference point", [rp.location for rp in self.reference_points]),
        ):
            for x, y in pts:
                if not (0 <= x <= self.width and 0 <= y <= self.height):
                    raise ValidationError(
                        f"{name} ({x}, {y}) lies outside [0,{self.width}]x[0,{self.height}]"
                    )
        if self.k < 1:
            raise ValidationError("testbed needs at least one transmitter and one receiver")
        if len(self.reference_points) < 1:
            raise ValidationError("testbed needs at least one reference point")

    @property
    def n_transmitters(self) -> int:
        return len(self.transmitters)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    @property
    def k(self) -> int:
        return self.n_transmitters * self.n_receivers

    def pair_index(self, tx: int, rx: int) -> int:
        """Flat index of pair (tx, rx) in transmitter-major order."""
        if not (0 <= tx < self.n_transmitters and 0 <= rx < self.n_receivers):
            raise ValidationError(f"pair ({tx}, {rx}) outside device lists")
        return tx * self.n_receivers + rx


@dataclass(eq=False)
class NormParams:
    """Per-dimension min/max fitted on training scans."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self) -> None:
        self.min = np.asarray(self.min, dtype=float)
        self.max = np.asarray(self.max, dtype=float)
        if self.min.shape != self.max.shape or self.min.ndim != 1:
            raise ValidationError("norm params min/max must be 1-D and equal length")
        if np.any(self.min > self.max):
            raise ValidationError("norm params require min <= max per dimension")

    @property
    def k(self) -> int:
        return self.min.shape[0]

    @property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of dimensions where min == max (no spread in training)."""
        return self.min == self.max

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormParams):
            return NotImplemented
        return np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max)


def fill_undetected(measurements: Mapping[int, int], k: int) -> StateVector:
    """Build a complete state vector from a partial scan.

    `measurements` maps flat pair index -> measured RTT (ns). Missing pairs get
    PLACEHOLDER_NS with detected_mask False; measured values (negative included)
    pass through unchanged.
    """
    values = np.full(k, PLACEHOLDER_NS, dtype=np.int64)
    mask = np.zeros(k, dtype=bool)
    for idx, rtt in measurements.items():
        if not 0 <= idx < k:
            raise ValidationError(f"pair index {idx} outside 0..{k - 1}")
        values[idx] = int(rtt)
        mask[idx] = True
    return StateVector(values, mask)


def fit_normalizer(training: Sequence[StateVector]) -> NormParams:
    """Per-dimension min/max over a nonempty training set."""
    if len(training) == 0:
        raise ValidationError("cannot fit a normalizer on an empty training set")
    stacked = np.stack([s.values for s in training]).astype(float)
    return NormParams(stacked.min(axis=0), stacked.max(axis=0))


def normalize(s: StateVector | np.ndarray, p: NormParams) -> np.ndarray:
    """Min-max normalize into [0,1], clamping out-of-range values.

    Degenerate dimensions (min == max in training) map to 0.5.
    """
    values = s.values if isinstance(s, StateVector) else np.asarray(s, dtype=float)
    if values.shape != p.min.shape:
        raise ValidationError(
            f"vector has {values.shape[0]} dimensions, normalizer expects {p.k}"
        )
    span = p.max - p.min
    degenerate = p.degenerate
    safe_span = np.where(degenerate, 1.0, span)
    out = (values.astype(float) - p.min) / safe_span
    out = np.clip(out, 0.0, 1.0)
    out[degenerate] = 0.5
    return out


def normalized_placeholder(p: NormParams) -> np.ndarray:
    """Per-dimension normalized image of the undetected-pair placeholder."""
    return normalize(np.full(p.k, PLACEHOLDER_NS, dtype=np.int64), p)


# ---------------------------------------------------------------------------
# External file formats
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ScanRecord:
    """One CSV row: a scan with its label. ref_id == -1 means unlabeled; x/y
    carry the ground-truth person position when known (NaN otherwise)."""

    ref_id: int
    x: float
    y: float
    state: StateVector

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScanRecord):
            return NotImplemented
        same_pos = (self.x == other.x or (math.isnan(self.x) and math.isnan(other.x))) and (
            self.y == other.y or (math.isnan(self.y) and math.isnan(other.y))
        )
        return self.ref_id == other.ref_id and same_pos and self.state == other.state


def _scan_header(k: int) -> list[str]:
    return (
        ["ref_id", "x", "y"]
        + [f"rtt_{i}" for i in range(k)]
        + [f"mask_{i}" for i in range(k)]
    )


def save_scans(path: str | Path, records: Iterable[ScanRecord], k: int) -> None:
    records = list(records)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(_scan_header(k))
        for rec in records:
            if rec.state.k != k:
                raise ValidationError(
                    f"scan for ref {rec.ref_id} has K={rec.state.k}, expected {k}"
                )
            writer.writerow(
                [rec.ref_id, repr(rec.x), repr(rec.y)]
                + [int(v) for v in rec.state.values]
                + [int(m) for m in rec.state.detected_mask]
            )


def load_scans(path: str | Path, k: int | None = None) -> list[ScanRecord]:
    """Read a scan CSV. If `k` is given, the file's K must match exactly."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        n_cols = len(header)
        if n_cols < 5 or (n_cols - 3) % 2 != 0:
            raise ParseError(f"{path}: header has {n_cols} columns, expected 3 + 2*K")
        file_k = (n_cols - 3) // 2
        if header != _scan_header(file_k):
            raise ParseError(f"{path}: unexpected header {header[:4]}...")
        if k is not None and file_k != k:
            raise ParseError(f"{path}: file has K={file_k}, expected K={k}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cols:
                raise ParseError(f"{path}:{lineno}: {len(row)} fields, expected {n_cols}")
            try:
                ref_id = int(row[0])
                x, y = float(row[1]), float(row[2])
                values = np.array([int(v) for v in row[3 : 3 + file_k]], dtype=np.int64)
                mask_raw = [int(v) for v in row[3 + file_k :]]
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            if any(m not in (0, 1) for m in mask_raw):
                raise ParseError(f"{path}:{lineno}: mask entries must be 0 or 1")
            records.append(
                ScanRecord(ref_id, x, y, StateVector(values, np.array(mask_raw, dtype=bool)))
            )
    return records


def save_testbed(path: str | Path, tb: Testbed) -> None:
    doc = {
        "width": tb.width,
        "height": tb.height,
        "transmitters": [[x, y] for x, y in tb.transmitters],
        "receivers": [[x, y] for x, y in tb.receivers],
        "reference_points": [
            {"id": rp.id, "x": rp.location[0], "y": rp.location[1]}
            for rp in tb.reference_points
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_testbed(path: str | Path) -> Testbed:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from None
    try:
        return Testbed(
            width=float(doc["width"]),
            height=float(doc["height"]),
            transmitters=[(float(x), float(y)) for x, y in doc["transmitters"]],
            receivers=[(float(x), float(y)) for x, y in doc["receivers"]],
            reference_points=[
                ReferencePoint(int(rp["id"]), (float(rp["x"]), float(rp["y"])))
                for rp in doc["reference_points"]
            ],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad testbed document: {e!r}") from None
