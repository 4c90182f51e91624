"""HTTP service for the online localization phase.

The service loads a trained model store once and answers concurrent
localization requests over it; the registry is immutable, so no locking is
needed. Batch work (simulation, training, evaluation) stays in the CLI.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from rttloc.dae import ModelRegistry, load_store, reconstruction_errors
from rttloc.data import StateVector, normalize
from rttloc.errors import ValidationError
from rttloc.localizer import localize_multi


class ScanIn(BaseModel):
    """One raw scan: K RTT values in integer nanoseconds plus an optional
    detection mask (defaults to all-detected)."""

    rtt_ns: list[int]
    detected: list[bool] | None = None


class LocalizeRequest(BaseModel):
    scans: list[ScanIn] = Field(min_length=1)
    tau: float | None = None
    k_neighbors: int = 3
    n_expected: int | None = None
    sigma: float | None = None


class DetectionOut(BaseModel):
    ref_point_id: int
    x: float
    y: float
    score: float


class LocalizeResponse(BaseModel):
    detections: list[DetectionOut]
    threshold_used: float
    k_neighbors: int


class ReconstructionErrorsResponse(BaseModel):
    ref_point_ids: list[int]
    errors: list[float]


class InfoResponse(BaseModel):
    n_models: int
    k: int
    hidden_dim: int
    ref_point_ids: list[int]


def _to_state(scan: ScanIn, k: int) -> StateVector:
    if len(scan.rtt_ns) != k:
        raise ValidationError(f"scan has {len(scan.rtt_ns)} values, store expects K={k}")
    mask = scan.detected if scan.detected is not None else [True] * k
    if len(mask) != k:
        raise ValidationError("detected mask length does not match K")
    return StateVector(np.array(scan.rtt_ns, dtype=np.int64), np.array(mask, dtype=bool))


def create_app(store: str | Path | ModelRegistry) -> FastAPI:
    registry = store if isinstance(store, ModelRegistry) else load_store(store)
    app = FastAPI(title="rttloc", version="0.1.0")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        first = registry.models[registry.ids[0]]
        return InfoResponse(
            n_models=registry.m,
            k=registry.k,
            hidden_dim=first.hidden_dim,
            ref_point_ids=registry.ids,
        )

    @app.post("/localize", response_model=LocalizeResponse)
    def localize(req: LocalizeRequest) -> LocalizeResponse:
        try:
            scans = [_to_state(s, registry.k) for s in req.scans]
            est = localize_multi(
                registry,
                scans,
                tau=req.tau,
                k_neighbors=req.k_neighbors,
                n_expected=req.n_expected,
                sigma=req.sigma,
            )
        except ValidationError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        return LocalizeResponse(
            detections=[
                DetectionOut(
                    ref_point_id=d.ref_point_id, x=d.position[0], y=d.position[1], score=d.score
                )
                for d in est.detected
            ],
            threshold_used=est.threshold_used,
            k_neighbors=est.k_neighbors,
        )

    @app.post("/reconstruction-errors", response_model=ReconstructionErrorsResponse)
    def recon_errors(scan: ScanIn) -> ReconstructionErrorsResponse:
        try:
            state = _to_state(scan, registry.k)
        except ValidationError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        errors = reconstruction_errors(registry, normalize(state, registry.norm_params))
        return ReconstructionErrorsResponse(
            ref_point_ids=registry.ids, errors=[float(e) for e in errors]
        )

    return app
