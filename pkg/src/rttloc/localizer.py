"""Online localization: RBF likelihood per model, Bayesian posterior with a
uniform prior, threshold detection, and KNN-weighted fine localization.

The posterior is computed in log space (a softmax over per-model log
likelihoods), which is algebraically identical to normalizing the raw RBF
values but immune to underflow when the kernel scale is tiny — the single-scan
case, where the scan-spread sigma collapses to its floor, would otherwise
produce an all-zero likelihood vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from rttloc.dae import ModelRegistry, forward
from rttloc.data import StateVector, normalize
from rttloc.errors import ValidationError

SIGMA_FLOOR = 1e-6


@dataclass(eq=False)
class LikelihoodVector:
    """Per-model likelihoods P(s | l_i), ordered by ascending ref id.

    `log_p` is the exact log of `p`; `p` itself may underflow to 0 for very
    small sigma, so downstream math uses `log_p`.
    """

    p: np.ndarray
    log_p: np.ndarray
    n_scans: int
    sigma: float


@dataclass(frozen=True)
class Detection:
    ref_point_id: int
    position: tuple[float, float]
    score: float


@dataclass(eq=False)
class LocalizationEstimate:
    detected: list[Detection]
    threshold_used: float
    k_neighbors: int


def scan_sigma(scans: np.ndarray) -> float:
    """Kernel scale from the online scans: the mean over dimensions of the
    per-dimension standard deviation, floored at SIGMA_FLOOR.

    This is one of several reasonable ways to turn scan spread into a scalar
    kernel scale; pass an explicit sigma to override it (recommended for
    multi-person scan groups, where the spread collapses).
    """
    if scans.shape[0] < 2:
        return SIGMA_FLOOR
    return max(float(np.mean(scans.std(axis=0))), SIGMA_FLOOR)


def likelihood(
    registry: ModelRegistry,
    scans: Sequence[np.ndarray],
    sigma: float | None = None,
) -> LikelihoodVector:
    """P(s | l_i) for each model: the mean over scans of exp(-||s - s_hat|| / sigma),
    with the Euclidean norm of the reconstruction residual."""
    if len(scans) == 0:
        raise ValidationError("likelihood needs at least one scan")
    X = np.stack([np.asarray(s, dtype=float) for s in scans])
    if sigma is None:
        sigma = scan_sigma(X)
    elif sigma <= 0:
        raise ValidationError("sigma must be positive")

    n = X.shape[0]
    log_p = np.empty(registry.m)
    for row, i in enumerate(registry.ids):
        model = registry.models[i]
        dists = np.array([np.linalg.norm(x - forward(model, x)[1]) for x in X])
        # log of (1/n) * sum_j exp(-d_j / sigma)
        log_p[row] = logsumexp(-dists / sigma) - np.log(n)
    return LikelihoodVector(p=np.exp(log_p), log_p=log_p, n_scans=n, sigma=float(sigma))


def posterior(lv: LikelihoodVector | np.ndarray) -> np.ndarray:
    """Normalize likelihoods into a posterior over reference points; the
    uniform prior cancels. Output sums to 1 and is invariant under positive
    scaling of the likelihoods."""
    if isinstance(lv, LikelihoodVector):
        log_p = lv.log_p
    else:
        p = np.asarray(lv, dtype=float)
        if np.any(p < 0):
            raise ValidationError("likelihoods must be nonnegative")
        total = p.sum()
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero likelihood vector")
        return p / total
    return np.exp(log_p - logsumexp(log_p))


def detect(q: np.ndarray, tau: float) -> list[int]:
    """Indices whose posterior mass strictly exceeds tau."""
    if not 0.0 <= tau < 1.0:
        raise ValidationError(f"tau={tau} outside [0,1)")
    return [int(i) for i in np.flatnonzero(q > tau)]


def fine_localize(
    q: np.ndarray,
    detected_index: int,
    locations: np.ndarray,
    k_neighbors: int,
) -> np.ndarray:
    """Continuous-space refinement of one detection.

    Takes the k nearest reference points to the detected one (itself included,
    distance ties broken by lower index), re-normalizes their posterior masses
    to sum to 1, and returns the weighted centroid. Re-normalizing keeps the
    output a true center of mass inside the neighborhood's convex hull.
    """
    m = locations.shape[0]
    if not 1 <= k_neighbors <= m:
        raise ValidationError(f"k_neighbors={k_neighbors} outside 1..{m}")
    if not 0 <= detected_index < m:
        raise ValidationError("detected_index out of range")
    d = np.linalg.norm(locations - locations[detected_index], axis=1)
    neighbors = np.lexsort((np.arange(m), d))[:k_neighbors]
    w = q[neighbors]
    total = w.sum()
    if total <= 0:
        # all neighborhood mass underflowed; fall back to the detected point
        return locations[detected_index].astype(float)
    w = w / total
    return w @ locations[neighbors]


def localize_multi(
    registry: ModelRegistry,
    scans: Sequence[StateVector],
    tau: float | None = None,
    k_neighbors: int = 3,
    n_expected: int | None = None,
    sigma: float | None = None,
) -> LocalizationEstimate:
    """Full online pipeline: normalize -> likelihood -> posterior -> detect ->
    fine-localize each detection.

    With n_expected given, at most that many highest-posterior detections are
    kept; fewer detections are never padded (no invention of persons). The
    default threshold is 1/(2*n_expected) when the person count is known and
    1.5/M otherwise.
    """
    if tau is None:
        tau = 1.0 / (2 * n_expected) if n_expected else 1.5 / registry.m
    normalized = [normalize(s, registry.norm_params) for s in scans]
    lv = likelihood(registry, normalized, sigma=sigma)
    q = posterior(lv)
    hits = detect(q, tau)
    if n_expected is not None and len(hits) > n_expected:
        hits = sorted(hits, key=lambda i: (-q[i], i))[:n_expected]
        hits = sorted(hits)
    locations = registry.location_array()
    ids = registry.ids
    k_neighbors = min(k_neighbors, registry.m)  # small registries
    detections = []
    for idx in hits:
        pos = fine_localize(q, idx, locations, k_neighbors)
        detections.append(
            Detection(ref_point_id=ids[idx], position=(float(pos[0]), float(pos[1])), score=float(q[idx]))
        )
    return LocalizationEstimate(detected=detections, threshold_used=float(tau), k_neighbors=k_neighbors)
