"""Training-time input corruption for the denoising autoencoders.

Two corruptions mirror the failure modes seen in live RTT scans: masking
(a pair silently drops out of a scan) and additive white Gaussian noise
(calibration offsets, zero/negative ranges, processing-delay overshoots).
Masked entries are set to the normalized placeholder value so the corruption is
indistinguishable from a genuine missed detection; Gaussian output is not
clamped, since overshooting [0,1] is exactly the anomaly being mimicked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rttloc.data import NormParams, normalized_placeholder
from rttloc.errors import ValidationError


@dataclass(frozen=True)
class CorruptionConfig:
    p_silence: float = 0.1
    sigma_gauss: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_silence <= 1.0:
            raise ValidationError(f"p_silence={self.p_silence} outside [0,1]")
        if self.sigma_gauss < 0.0:
            raise ValidationError(f"sigma_gauss={self.sigma_gauss} must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def mask_corrupt(
    v: np.ndarray,
    p_silence: float,
    mask_values: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Replace a Bernoulli(p_silence) subset of entries with the normalized
    placeholder; everything else is untouched."""
    draw = rng.random(v.shape[0]) < p_silence
    return np.where(draw, mask_values, v)


def gauss_corrupt(v: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid Normal(0, sigma^2) noise per dimension, unclamped."""
    if sigma == 0.0:
        return v.copy()
    return v + rng.normal(0.0, sigma, size=v.shape[0])


def corrupt_sample(
    v: np.ndarray,
    cfg: CorruptionConfig,
    mask_values: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply exactly one of the two corruptions, chosen uniformly at random.

    Fresh noise is drawn on every call, so each presentation of a training
    sample sees a different corruption.
    """
    if rng.random() < 0.5:
        return mask_corrupt(v, cfg.p_silence, mask_values, rng)
    return gauss_corrupt(v, cfg.sigma_gauss, rng)


def placeholder_mask_values(p: NormParams) -> np.ndarray:
    """Precomputed per-dimension mask target for a normalizer."""
    return normalized_placeholder(p)
