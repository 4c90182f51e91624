import json
import math

import numpy as np
import pytest

from rttloc.corruption import CorruptionConfig
from rttloc.dae import (
    DaeModel,
    ModelRegistry,
    TrainConfig,
    backward,
    forward,
    load_store,
    loss,
    reconstruction_errors,
    save_store,
    sigmoid,
    train,
    train_registry,
)
from rttloc.data import NormParams
from rttloc.errors import ValidationError


def _random_model(rng, k, hidden):
    return DaeModel(
        ref_point_id=0,
        W=rng.uniform(-1, 1, size=(hidden, k)),
        b_enc=rng.uniform(-1, 1, size=hidden),
        b_dec=rng.uniform(-1, 1, size=k),
    )


class TestForward:
    def test_zero_model_outputs_half(self):
        m = DaeModel(0, np.zeros((3, 5)), np.zeros(3), np.zeros(5))
        h, s_hat = forward(m, np.random.default_rng(0).random(5))
        assert np.all(h == 0.5)
        assert np.all(s_hat == 0.5)

    def test_all_ones_mask_is_identity(self):
        rng = np.random.default_rng(1)
        m = _random_model(rng, 6, 3)
        v = rng.random(6)
        plain = forward(m, v)
        masked = forward(m, v, dropout_mask=np.ones(3), dropout_rate=0.0)
        assert np.array_equal(plain[0], masked[0])
        assert np.array_equal(plain[1], masked[1])

    def test_matches_hand_computed_evaluation(self):
        # independent scalar-loop evaluation of the same formulas
        rng = np.random.default_rng(2)
        m = _random_model(rng, 4, 2)
        v = rng.random(4)
        h, s_hat = forward(m, v)
        for j in range(2):
            z = sum(m.W[j, i] * v[i] for i in range(4)) + m.b_enc[j]
            assert h[j] == pytest.approx(1.0 / (1.0 + math.exp(-z)), abs=1e-12)
        for i in range(4):
            z = sum(m.W[j, i] * h[j] for j in range(2)) + m.b_dec[i]
            assert s_hat[i] == pytest.approx(1.0 / (1.0 + math.exp(-z)), abs=1e-12)

    def test_dimension_mismatch(self):
        m = _random_model(np.random.default_rng(0), 4, 2)
        with pytest.raises(ValidationError):
            forward(m, np.zeros(5))
        with pytest.raises(ValidationError):
            forward(m, np.zeros(4), dropout_mask=np.ones(3), dropout_rate=0.1)


class TestLoss:
    def test_identical_is_zero(self):
        v = np.random.default_rng(0).random(8)
        assert loss(v, v) == 0.0

    def test_two_dim_example(self):
        assert loss(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 0.5

    def test_matches_direct_mean_of_squares(self):
        rng = np.random.default_rng(3)
        a, b = rng.random(63), rng.random(63)
        direct = sum((x - y) ** 2 for x, y in zip(a, b)) / 63
        assert loss(a, b) == pytest.approx(direct, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            loss(np.zeros(3), np.zeros(4))


def _fd_gradients(m, v, s_clean, dmask, rate, eps=1e-5):
    """Central finite differences of the reconstruction loss in every
    parameter coordinate."""

    def f():
        return loss(forward(m, v, dmask, rate)[1], s_clean)

    grads = []
    for arr in (m.W, m.b_enc, m.b_dec):
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            hi = f()
            arr[idx] = orig - eps
            lo = f()
            arr[idx] = orig
            g[idx] = (hi - lo) / (2 * eps)
        grads.append(g)
    return tuple(grads)


def _max_rel_err(analytic, oracle):
    return max(
        float(np.max(np.abs(a - o) / np.maximum(np.abs(o), 1e-7)))
        for a, o in zip(analytic, oracle)
    )


class TestBackward:
    def test_finite_differences_100_random_models(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for trial in range(100):
            k = int(rng.integers(2, 9))
            hidden = int(rng.integers(1, 5))
            m = _random_model(rng, k, hidden)
            v = rng.random(k)
            s_clean = rng.random(k)
            if trial % 2 == 0:
                dmask, rate = None, 0.0
            else:
                rate = float(rng.uniform(0.1, 0.5))
                dmask = (rng.random(hidden) >= rate).astype(float)
            analytic = backward(m, v, s_clean, dmask, rate)
            oracle = _fd_gradients(m, v, s_clean, dmask, rate)
            worst = max(worst, _max_rel_err(analytic, oracle))
        assert worst < 1e-4

    def test_zero_residual_zeroes_decoder_bias_gradient(self):
        rng = np.random.default_rng(5)
        m = _random_model(rng, 4, 2)
        v = rng.random(4)
        _, s_hat = forward(m, v)
        _, _, db_dec = backward(m, v, s_hat.copy())
        assert np.allclose(db_dec, 0.0, atol=1e-15)

    def test_tied_gradient_equals_untied_sum(self):
        # untied twin: independent W1 (encoder) and W2 (decoder) initialized
        # to W and W.T; tied dW must equal dW1 + dW2.T
        rng = np.random.default_rng(6)
        m = _random_model(rng, 5, 3)
        v, s_clean = rng.random(5), rng.random(5)

        W1, W2 = m.W.copy(), m.W.T.copy()

        def untied_loss():
            h = sigmoid(W1 @ v + m.b_enc)
            s_hat = sigmoid(W2 @ h + m.b_dec)
            return loss(s_hat, s_clean)

        eps = 1e-6
        dW1 = np.zeros_like(W1)
        for idx in np.ndindex(*W1.shape):
            orig = W1[idx]
            W1[idx] = orig + eps
            hi = untied_loss()
            W1[idx] = orig - eps
            lo = untied_loss()
            W1[idx] = orig
            dW1[idx] = (hi - lo) / (2 * eps)
        dW2 = np.zeros_like(W2)
        for idx in np.ndindex(*W2.shape):
            orig = W2[idx]
            W2[idx] = orig + eps
            hi = untied_loss()
            W2[idx] = orig - eps
            lo = untied_loss()
            W2[idx] = orig
            dW2[idx] = (hi - lo) / (2 * eps)

        dW, _, _ = backward(m, v, s_clean)
        assert np.allclose(dW, dW1 + dW2.T, atol=1e-8)


def _quiet_config(**kwargs):
    base = dict(
        corruption=CorruptionConfig(p_silence=0.0, sigma_gauss=0.0),
        dropout_rate=0.0,
        seed=0,
    )
    base.update(kwargs)
    return TrainConfig(**base)


class TestTrain:
    def test_memorizes_constant_vector(self):
        target = np.random.default_rng(7).random(10)
        scans = [target.copy() for _ in range(100)]
        model = train(scans, _quiet_config())
        assert model.train_meta["final_train_mse"] < 1e-4
        assert model.train_meta["epochs_run"] <= 3000

    def test_early_stopping_with_diverging_loss(self):
        # absurd learning rate makes validation deteriorate almost at once;
        # patience 1 must stop far short of the epoch budget and keep an
        # early snapshot
        rng = np.random.default_rng(8)
        scans = [rng.random(6) for _ in range(20)]
        model = train(scans, _quiet_config(learning_rate=500.0, patience=1))
        assert model.train_meta["epochs_run"] <= 10
        assert model.train_meta["best_epoch"] <= model.train_meta["epochs_run"]

    def test_returned_snapshot_is_best_validation(self):
        rng = np.random.default_rng(9)
        base = rng.random(6)
        scans = [base + rng.normal(0, 0.05, 6) for _ in range(30)]
        model = train(scans, _quiet_config(max_epochs=50, patience=50))
        # recompute the validation split exactly as training does
        order = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(0,))).permutation(30)
        val_idx = order[:6]
        X = np.stack(scans)
        val = float(np.mean([loss(forward(model, X[i])[1], X[i]) for i in val_idx]))
        assert val == pytest.approx(model.train_meta["final_val_mse"], rel=1e-12)

    def test_too_few_scans_rejected(self):
        with pytest.raises(ValidationError):
            train([np.zeros(4)], _quiet_config())

    def test_determinism(self):
        rng = np.random.default_rng(10)
        scans = [rng.random(5) for _ in range(20)]
        cfg = TrainConfig(
            max_epochs=30,
            patience=10,
            corruption=CorruptionConfig(p_silence=0.1, sigma_gauss=0.1),
            seed=3,
        )
        a = train(scans, cfg, ref_point_id=2)
        b = train(scans, cfg, ref_point_id=2)
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.b_enc, b.b_enc)
        assert np.array_equal(a.b_dec, b.b_dec)

    def test_hidden_dim_defaults_to_half_k(self):
        scans = [np.random.default_rng(0).random(9) for _ in range(10)]
        model = train(scans, _quiet_config(max_epochs=1, patience=1))
        assert model.hidden_dim == 5


def _toy_training(rng, ids, k=6, n=12):
    training = {}
    for i in ids:
        base = rng.random(k)
        scans = [np.clip(base + rng.normal(0, 0.02, k), 0, 1) for _ in range(n)]
        training[i] = ((float(i), float(i)), scans)
    return training


def _toy_registry(tmp_path, seed=0, ids=(0, 1, 2)):
    rng = np.random.default_rng(seed)
    raw = _toy_training(rng, ids)
    # bypass integer StateVector plumbing: train directly on float vectors
    models = {
        i: train(scans, _quiet_config(max_epochs=20, patience=20), ref_point_id=i)
        for i, (_, scans) in raw.items()
    }
    params = NormParams(np.zeros(6), np.ones(6))
    return ModelRegistry(params, models, {i: loc for i, (loc, _) in raw.items()})


class TestRegistry:
    def test_reconstruction_errors_shape_and_symmetry(self):
        params = NormParams(np.zeros(4), np.ones(4))
        zero = lambda i: DaeModel(i, np.zeros((2, 4)), np.zeros(2), np.zeros(4))
        reg = ModelRegistry(params, {0: zero(0), 1: zero(1)}, {0: (0, 0), 1: (1, 1)})
        errs = reconstruction_errors(reg, np.full(4, 0.3))
        assert errs.shape == (2,)
        assert errs[0] == errs[1]  # identical models, identical error

    def test_single_model_registry(self):
        params = NormParams(np.zeros(4), np.ones(4))
        reg = ModelRegistry(
            params,
            {5: DaeModel(5, np.zeros((2, 4)), np.zeros(2), np.zeros(4))},
            {5: (0.0, 0.0)},
        )
        assert reconstruction_errors(reg, np.full(4, 0.5)).shape == (1,)

    def test_mismatched_ids_rejected(self):
        params = NormParams(np.zeros(4), np.ones(4))
        m = DaeModel(0, np.zeros((2, 4)), np.zeros(2), np.zeros(4))
        with pytest.raises(ValidationError):
            ModelRegistry(params, {0: m}, {1: (0.0, 0.0)})

    def test_training_one_point_leaves_others_unchanged(self):
        # per-point RNG streams: model i's bytes do not depend on which other
        # points were trained alongside it
        rng = np.random.default_rng(11)
        raw = _toy_training(rng, [0, 1, 2])
        cfg = _quiet_config(max_epochs=15, patience=15)
        all_three = {
            i: train(scans, cfg, ref_point_id=i) for i, (_, scans) in raw.items()
        }
        only_one = train(raw[1][1], cfg, ref_point_id=1)
        assert np.array_equal(all_three[1].W, only_one.W)
        assert np.array_equal(all_three[1].b_dec, only_one.b_dec)


class TestStore:
    def test_round_trip_byte_identical(self, tmp_path):
        reg = _toy_registry(tmp_path, seed=1)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_store(p1, reg)
        save_store(p2, load_store(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_exact_values(self, tmp_path):
        reg = _toy_registry(tmp_path, seed=2)
        path = tmp_path / "store.json"
        save_store(path, reg)
        loaded = load_store(path)
        assert loaded.ids == reg.ids
        for i in reg.ids:
            assert np.array_equal(loaded.models[i].W, reg.models[i].W)
            assert np.array_equal(loaded.models[i].b_enc, reg.models[i].b_enc)
            assert np.array_equal(loaded.models[i].b_dec, reg.models[i].b_dec)
            assert loaded.locations[i] == reg.locations[i]
        assert np.array_equal(loaded.norm_params.min, reg.norm_params.min)
        assert np.array_equal(loaded.norm_params.max, reg.norm_params.max)

    def test_declared_fields_present(self, tmp_path):
        reg = _toy_registry(tmp_path, seed=3)
        path = tmp_path / "store.json"
        save_store(path, reg)
        doc = json.loads(path.read_text())
        assert doc["K"] == 6
        assert doc["activation"] == "sigmoid"
        assert {"ref_point_id", "x", "y", "W", "b_enc", "b_dec", "train_meta"} <= set(
            doc["models"][0]
        )

    def test_corrupt_json_raises_parse_error(self, tmp_path):
        from rttloc.errors import ParseError

        path = tmp_path / "store.json"
        path.write_text("{broken")
        with pytest.raises(ParseError):
            load_store(path)
