"""Per-reference-point shallow denoising autoencoder.

One tied-weight autoencoder is trained for every reference point: the decoder
weight matrix is definitionally the transpose of the encoder's, so W is the
only weight matrix and its gradient accumulates both the encoder-path and
decoder-path contributions. Training is plain per-sample gradient descent on
MSE reconstruction loss, with fresh input corruption and a fresh hidden-layer
dropout mask drawn for every presented sample, and patience-based early
stopping on an uncorrupted validation split.

Models for different reference points are fully independent: adding or
retraining one never touches another, which is what lets the deployment grow
point by point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rttloc.corruption import CorruptionConfig, corrupt_sample, placeholder_mask_values
from rttloc.data import NormParams, StateVector, normalize
from rttloc.errors import ParseError, ValidationError


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(eq=False)
class DaeModel:
    """Trained parameters for one reference point.

    W is the hidden_dim x K encoder matrix; the decoder is W.T (tied). Biases
    are separate for the two layers. Activation is logistic sigmoid on both
    layers, which keeps reconstructions inside the normalized [0,1] range.
    """

    ref_point_id: int
    W: np.ndarray
    b_enc: np.ndarray
    b_dec: np.ndarray
    train_meta: dict = field(default_factory=dict)
    activation: str = "sigmoid"

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 3000
    patience: int = 50
    dropout_rate: float = 0.30
    learning_rate: float = 2.0
    val_fraction: float = 0.2
    hidden_dim: int | None = None  # None -> ceil(K / 2)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate={self.dropout_rate} outside [0,1)")
        if self.patience > self.max_epochs:
            raise ValidationError("patience cannot exceed max_epochs")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValidationError("val_fraction must lie in (0,1)")
        if self.learning_rate <= 0.0:
            raise ValidationError("learning_rate must be positive")


def forward(
    m: DaeModel,
    v: np.ndarray,
    dropout_mask: np.ndarray | None = None,
    dropout_rate: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Encode and reconstruct one vector.

    With a dropout mask, hidden activations are masked and rescaled by
    1/(1 - dropout_rate) (inverted dropout), so inference simply omits the
    mask. Returns (hidden activations, reconstruction).
    """
    if v.shape[0] != m.k:
        raise ValidationError(f"input has {v.shape[0]} dims, model expects {m.k}")
    h = sigmoid(m.W @ v + m.b_enc)
    if dropout_mask is not None:
        if dropout_mask.shape[0] != m.hidden_dim:
            raise ValidationError("dropout mask length does not match hidden_dim")
        h = h * dropout_mask / (1.0 - dropout_rate)
    s_hat = sigmoid(m.W.T @ h + m.b_dec)
    return h, s_hat


def loss(s_hat: np.ndarray, s_clean: np.ndarray) -> float:
    """Mean squared reconstruction error over the K dimensions."""
    if s_hat.shape != s_clean.shape:
        raise ValidationError("loss arguments must have equal shape")
    diff = s_hat - s_clean
    return float(diff @ diff) / s_hat.shape[0]


def backward(
    m: DaeModel,
    v_corrupt: np.ndarray,
    s_clean: np.ndarray,
    dropout_mask: np.ndarray | None = None,
    dropout_rate: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of loss(forward(v_corrupt), s_clean) w.r.t. (W, b_enc, b_dec).

    Because the decoder is W.T, dW is the sum of the decoder-path outer
    product and the encoder-path outer product.
    """
    k = m.k
    h_pre = sigmoid(m.W @ v_corrupt + m.b_enc)
    if dropout_mask is not None:
        h = h_pre * dropout_mask / (1.0 - dropout_rate)
    else:
        h = h_pre
    s_hat = sigmoid(m.W.T @ h + m.b_dec)

    delta_out = (2.0 / k) * (s_hat - s_clean) * s_hat * (1.0 - s_hat)
    db_dec = delta_out
    dW_dec = np.outer(h, delta_out)

    dh = m.W @ delta_out
    if dropout_mask is not None:
        dh = dh * dropout_mask / (1.0 - dropout_rate)
    delta_hidden = dh * h_pre * (1.0 - h_pre)
    db_enc = delta_hidden
    dW_enc = np.outer(delta_hidden, v_corrupt)

    return dW_enc + dW_dec, db_enc, db_dec


def _model_rng(seed: int, ref_point_id: int) -> np.random.Generator:
    # Per-reference-point stream: training jobs stay independent and
    # order-insensitive, so a registry can be built point by point or in
    # parallel with identical results.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ref_point_id,)))


def train(
    scans: Sequence[np.ndarray],
    cfg: TrainConfig,
    ref_point_id: int = 0,
    mask_values: np.ndarray | None = None,
) -> DaeModel:
    """Train one autoencoder on the normalized scans of a single reference point.

    The scans are split into train/validation; every epoch presents each
    training sample once with fresh corruption and a fresh dropout mask, taking
    one gradient step per sample. After each epoch the uncorrupted validation
    MSE is computed; training stops once it has not improved for `patience`
    consecutive epochs (or at max_epochs) and the best-validation snapshot is
    returned.

    `mask_values` is the per-dimension target for masking corruption (the
    normalized placeholder); defaults to zeros when no normalizer context
    exists.
    """
    if len(scans) < 2:
        raise ValidationError("training needs at least 2 scans for a validation split")
    X = np.stack([np.asarray(s, dtype=float) for s in scans])
    n, k = X.shape
    if mask_values is None:
        mask_values = np.zeros(k)

    rng = _model_rng(cfg.seed, ref_point_id)
    hidden = cfg.hidden_dim if cfg.hidden_dim is not None else math.ceil(k / 2)

    order = rng.permutation(n)
    n_val = min(max(1, int(round(cfg.val_fraction * n))), n - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]

    limit = math.sqrt(6.0 / (k + hidden))
    W = rng.uniform(-limit, limit, size=(hidden, k))
    b_enc = np.zeros(hidden)
    b_dec = np.zeros(k)
    model = DaeModel(ref_point_id, W, b_enc, b_dec)

    def val_mse() -> float:
        return float(
            np.mean([loss(forward(model, X[i])[1], X[i]) for i in val_idx])
        )

    best_val = math.inf
    best = (W.copy(), b_enc.copy(), b_dec.copy())
    best_epoch = 0
    epochs_since_best = 0
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        for i in rng.permutation(train_idx):
            v = X[i]
            vc = corrupt_sample(v, cfg.corruption, mask_values, rng)
            if cfg.dropout_rate > 0.0:
                dmask = (rng.random(hidden) >= cfg.dropout_rate).astype(float)
            else:
                dmask = None
            dW, dbe, dbd = backward(model, vc, v, dmask, cfg.dropout_rate)
            W -= cfg.learning_rate * dW
            b_enc -= cfg.learning_rate * dbe
            b_dec -= cfg.learning_rate * dbd
        epochs_run = epoch
        current = val_mse()
        if current < best_val:
            best_val = current
            best = (W.copy(), b_enc.copy(), b_dec.copy())
            best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    model.W, model.b_enc, model.b_dec = best
    train_mse = float(np.mean([loss(forward(model, X[i])[1], X[i]) for i in train_idx]))
    model.train_meta = {
        "epochs_run": epochs_run,
        "best_epoch": best_epoch,
        "final_train_mse": train_mse,
        "final_val_mse": best_val,
    }
    return model


@dataclass(eq=False)
class ModelRegistry:
    """The M trained models plus the shared normalizer and point locations."""

    norm_params: NormParams
    models: dict[int, DaeModel]
    locations: dict[int, tuple[float, float]]

    def __post_init__(self) -> None:
        if set(self.models) != set(self.locations):
            raise ValidationError("registry models and locations must cover the same ids")
        if len(self.models) < 1:
            raise ValidationError("registry needs at least one model")

    @property
    def ids(self) -> list[int]:
        return sorted(self.models)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def k(self) -> int:
        return self.norm_params.k

    def location_array(self) -> np.ndarray:
        return np.array([self.locations[i] for i in self.ids])


def reconstruction_errors(registry: ModelRegistry, s: np.ndarray) -> np.ndarray:
    """Per-model reconstruction MSE of one normalized scan, ordered by
    ascending reference-point id. No dropout at inference."""
    return np.array(
        [loss(forward(registry.models[i], s)[1], s) for i in registry.ids]
    )


def train_registry(
    training: dict[int, tuple[tuple[float, float], list[StateVector]]],
    cfg: TrainConfig,
) -> ModelRegistry:
    """Fit the shared normalizer on all training scans, then train one model
    per reference point. `training` maps ref id -> (location, scans)."""
    all_scans = [s for _, scans in training.values() for s in scans]
    from rttloc.data import fit_normalizer

    params = fit_normalizer(all_scans)
    mask_values = placeholder_mask_values(params)
    models = {}
    for ref_id, (_, scans) in sorted(training.items()):
        normalized = [normalize(s, params) for s in scans]
        models[ref_id] = train(normalized, cfg, ref_point_id=ref_id, mask_values=mask_values)
    return ModelRegistry(
        norm_params=params,
        models=models,
        locations={ref_id: loc for ref_id, (loc, _) in training.items()},
    )


# ---------------------------------------------------------------------------
# Model store persistence
# ---------------------------------------------------------------------------

def save_store(path: str | Path, registry: ModelRegistry) -> None:
    """Write the registry as JSON. Floats are serialized with shortest
    round-trip repr, so load(save(x)) is bit-exact."""
    first = registry.models[registry.ids[0]]
    doc = {
        "K": registry.k,
        "hidden_dim": first.hidden_dim,
        "activation": first.activation,
        "norm_params": {
            "min": registry.norm_params.min.tolist(),
            "max": registry.norm_params.max.tolist(),
        },
        "models": [
            {
                "ref_point_id": i,
                "x": registry.locations[i][0],
                "y": registry.locations[i][1],
                "W": registry.models[i].W.tolist(),
                "b_enc": registry.models[i].b_enc.tolist(),
                "b_dec": registry.models[i].b_dec.tolist(),
                "train_meta": registry.models[i].train_meta,
            }
            for i in registry.ids
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_store(path: str | Path) -> ModelRegistry:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from None
    try:
        params = NormParams(np.array(doc["norm_params"]["min"]), np.array(doc["norm_params"]["max"]))
        models = {}
        locations = {}
        for entry in doc["models"]:
            i = int(entry["ref_point_id"])
            models[i] = DaeModel(
                ref_point_id=i,
                W=np.array(entry["W"], dtype=float),
                b_enc=np.array(entry["b_enc"], dtype=float),
                b_dec=np.array(entry["b_dec"], dtype=float),
                train_meta=dict(entry["train_meta"]),
                activation=doc["activation"],
            )
            locations[i] = (float(entry["x"]), float(entry["y"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad model store: {e!r}") from None
    registry = ModelRegistry(params, models, locations)
    if registry.k != int(doc["K"]):
        raise ParseError(f"{path}: declared K={doc['K']} does not match norm params")
    return registry
