import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rttloc.dae import DaeModel, ModelRegistry
from rttloc.data import NormParams
from rttloc.service import create_app


def _constant_model(ref_id: int, k: int, target: float) -> DaeModel:
    logit = math.log(target / (1.0 - target))
    return DaeModel(ref_id, np.zeros((2, k)), np.zeros(2), np.full(k, logit))


@pytest.fixture(scope="module")
def client():
    # three fixed-output models over a 4-dim space spanning [0, 100] ns
    k = 4
    params = NormParams(np.zeros(k), np.full(k, 100.0))
    models = {i: _constant_model(i, k, t) for i, t in enumerate([0.5, 0.8, 0.9])}
    locations = {0: (1.0, 1.0), 1: (3.0, 1.0), 2: (3.0, 3.0)}
    registry = ModelRegistry(params, models, locations)
    return TestClient(create_app(registry))


class TestHealthAndInfo:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_info(self, client):
        resp = client.get("/info")
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["n_models"] == 3
        assert doc["k"] == 4
        assert doc["hidden_dim"] == 2
        assert doc["ref_point_ids"] == [0, 1, 2]


class TestLocalize:
    def test_dominant_model_detected(self, client):
        # raw 50 ns normalizes to 0.5: model 0's exact reconstruction
        resp = client.post(
            "/localize",
            json={"scans": [{"rtt_ns": [50, 50, 50, 50]}], "sigma": 0.1, "k_neighbors": 1},
        )
        assert resp.status_code == 200
        doc = resp.json()
        assert [d["ref_point_id"] for d in doc["detections"]] == [0]
        assert doc["detections"][0]["x"] == 1.0
        assert doc["detections"][0]["y"] == 1.0

    def test_n_expected_caps(self, client):
        resp = client.post(
            "/localize",
            json={
                "scans": [{"rtt_ns": [50, 50, 50, 50]}],
                "tau": 0.01,
                "n_expected": 1,
                "sigma": 0.5,
            },
        )
        assert resp.status_code == 200
        assert len(resp.json()["detections"]) == 1

    def test_scores_and_threshold_reported(self, client):
        resp = client.post(
            "/localize",
            json={"scans": [{"rtt_ns": [50, 50, 50, 50]}], "tau": 0.0, "sigma": 0.1},
        )
        doc = resp.json()
        assert doc["threshold_used"] == 0.0
        assert sum(d["score"] for d in doc["detections"]) == pytest.approx(1.0, abs=1e-9)

    def test_explicit_mask_accepted(self, client):
        resp = client.post(
            "/localize",
            json={
                "scans": [{"rtt_ns": [50, 50, 50, 200], "detected": [True, True, True, False]}],
                "sigma": 0.1,
            },
        )
        assert resp.status_code == 200

    def test_wrong_k_is_422(self, client):
        resp = client.post("/localize", json={"scans": [{"rtt_ns": [50, 50]}]})
        assert resp.status_code == 422

    def test_wrong_mask_length_is_422(self, client):
        resp = client.post(
            "/localize",
            json={"scans": [{"rtt_ns": [50, 50, 50, 50], "detected": [True]}]},
        )
        assert resp.status_code == 422

    def test_empty_scan_list_is_422(self, client):
        resp = client.post("/localize", json={"scans": []})
        assert resp.status_code == 422


class TestReconstructionErrors:
    def test_error_vector_ordered_by_id(self, client):
        resp = client.post("/reconstruction-errors", json={"rtt_ns": [50, 50, 50, 50]})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["ref_point_ids"] == [0, 1, 2]
        assert len(doc["errors"]) == 3
        # scan sits exactly on model 0's reconstruction
        assert doc["errors"][0] == pytest.approx(0.0, abs=1e-12)
        assert doc["errors"][0] < doc["errors"][1] < doc["errors"][2]

    def test_wrong_k_is_422(self, client):
        resp = client.post("/reconstruction-errors", json={"rtt_ns": [50]})
        assert resp.status_code == 422
