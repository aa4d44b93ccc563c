"""FastAPI application: the HTTP face of the registry, predictor, and search."""
from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .. import uq
from ..datakit import TrainedSurrogate
from ..errors import DataError, NumericError
from ..evalbench import derive_seed
from ..pgdsearch import Box, Mask, SearchSpec, TargetSpec
from . import schemas
from .jobs import JobManager, result_to_raw_dict
from .registry import HashMismatch, ModelRegistry, UnknownModel

_MC_SEED_TAG = 777


def _interval_out(iv: uq.PredictionInterval, standardizer, head: int) -> dict:
    raw = uq.interval_raw(iv, standardizer, head)
    if not (math.isfinite(raw.lower) and math.isfinite(raw.upper)):
        return {"lower": None, "upper": None, "unbounded": True}
    return {"lower": raw.lower, "upper": raw.upper, "unbounded": False}


def _intervals_at(
    registry: ModelRegistry,
    model_id: str,
    surrogate: TrainedSurrogate,
    x_raw: np.ndarray,
    method: str,
    alpha: float,
) -> list[dict]:
    """Per-head intervals at one raw-unit point, lazily calibrating."""
    n_heads = surrogate.arch.output_dim
    seed_base = int(registry.model_hash(model_id)[:12], 16)
    if method == "mc":
        out = []
        for h in range(n_heads):
            iv = uq.raw_mc_interval(
                x_raw, surrogate, alpha, K=uq.DEFAULT_K,
                seed=derive_seed(seed_base, _MC_SEED_TAG, h), head=h,
            )
            out.append(_interval_out(iv, surrogate.standardizer, h))
        return out
    entry = registry.get_calibration(model_id, method, alpha)
    if entry is None:
        entry = registry.calibrate(model_id, method, alpha)
    out = []
    if method == "confmc":
        for h, head_state in enumerate(entry["heads"]):
            calib = uq.ConfMCCalibration.from_dict(head_state)
            out.append(_interval_out(uq.confmc_interval(x_raw, surrogate, calib), surrogate.standardizer, h))
    elif method == "cp":
        for h, head_state in enumerate(entry["heads"]):
            calib = uq.SplitCPCalibration.from_dict(head_state)
            out.append(_interval_out(uq.splitcp_interval(x_raw, surrogate, calib), surrogate.standardizer, h))
    elif method == "cqr":
        lo_m = TrainedSurrogate.from_dict(entry["cqr_models"]["lo"])
        hi_m = TrainedSurrogate.from_dict(entry["cqr_models"]["hi"])
        for h, head_state in enumerate(entry["heads"]):
            calib = uq.CQRCalibration.from_dict(head_state)
            out.append(_interval_out(uq.cqr_interval(x_raw, lo_m, hi_m, calib), surrogate.standardizer, h))
    else:
        raise DataError(f"unknown method {method!r}")
    return out


def create_app(home: str | None = None, max_workers: int | None = None) -> FastAPI:
    app = FastAPI(title="protoforge", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    registry = ModelRegistry(home)
    jobs = JobManager(max_workers)
    app.state.registry = registry
    app.state.jobs = jobs

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(UnknownModel)
    async def unknown_model(request: Request, exc: UnknownModel):
        return JSONResponse(status_code=404, content={"detail": f"unknown model {exc.args[0]}"})

    @app.exception_handler(HashMismatch)
    async def hash_mismatch(request: Request, exc: HashMismatch):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(DataError)
    async def data_error(request: Request, exc: DataError):
        status = 422 if "infeasible box" in str(exc) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(NumericError)
    async def numeric_error(request: Request, exc: NumericError):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthOut)
    def health():
        return schemas.HealthOut()

    @app.get("/models", response_model=list[schemas.ModelSummary])
    def list_models():
        return [
            schemas.ModelSummary(
                id=m["model_id"],
                feature_names=m["feature_names"],
                target_names=m["target_names"],
                n_train=m["n_train"],
            )
            for m in registry.list_models()
        ]

    @app.get("/models/{model_id}", response_model=schemas.ModelDetail)
    def model_detail(model_id: str):
        m = registry.meta(model_id)
        calibs = [
            schemas.CalibrationRef(
                calibration_id=c["calibration_id"], method=c["method"], alpha=c["alpha"]
            )
            for c in registry.list_calibrations(model_id)
        ]
        return schemas.ModelDetail(
            id=m["model_id"],
            feature_names=m["feature_names"],
            target_names=m["target_names"],
            n_train=m["n_train"],
            n_cal=m["n_cal"],
            feature_ranges=[tuple(r) for r in m["feature_ranges"]],
            target_ranges=[tuple(r) for r in m["target_ranges"]],
            calibrations=calibs,
        )

    @app.get("/models/{model_id}/scatter", response_model=schemas.ScatterOut)
    def scatter(model_id: str, x: str = Query(...), y: str = Query(...)):
        m = registry.meta(model_id)
        sc = m["scatter"]

        def axis(name: str) -> np.ndarray:
            if name in m["feature_names"]:
                return np.asarray(sc["features"])[:, m["feature_names"].index(name)]
            if name in m["target_names"]:
                return np.asarray(sc["targets_predicted"])[:, m["target_names"].index(name)]
            raise DataError(f"unknown axis {name!r}")

        xs, ys = axis(x), axis(y)
        return schemas.ScatterOut(x=x, y=y, points=list(zip(xs.tolist(), ys.tolist())))

    @app.post("/models/{model_id}/predict", response_model=schemas.PredictOut)
    def predict(model_id: str, body: schemas.PredictIn):
        surrogate = registry.load_surrogate(model_id)
        if len(body.x) != surrogate.arch.input_dim:
            raise DataError(
                f"x has {len(body.x)} coordinates, model expects {surrogate.arch.input_dim}"
            )
        x = np.asarray(body.x, dtype=float)
        point = surrogate.predict(x[None, :])[0]
        intervals = _intervals_at(registry, model_id, surrogate, x, body.method, body.alpha)
        return schemas.PredictOut(
            point=point.tolist(),
            intervals=[schemas.IntervalOut(**iv) for iv in intervals],
            method=body.method,
            alpha=body.alpha,
        )

    @app.post("/models/{model_id}/calibrate", response_model=schemas.CalibrateOut)
    def calibrate(model_id: str, body: schemas.CalibrateIn):
        registry.model_path(model_id)  # 404 before validating the method
        entry = registry.calibrate(model_id, body.method, body.alpha)
        return schemas.CalibrateOut(
            calibration_id=entry["calibration_id"],
            method=body.method,
            alpha=body.alpha,
            heads=entry["heads"],
        )

    @app.post("/models/{model_id}/search", response_model=schemas.SearchAccepted, status_code=202)
    def search(model_id: str, body: schemas.SearchIn):
        surrogate = registry.load_surrogate(model_id)
        d = surrogate.arch.input_dim
        n_heads = surrogate.arch.output_dim
        std = surrogate.standardizer
        if len(body.bounds) != d:
            raise DataError(f"bounds has {len(body.bounds)} entries, model expects {d}")
        if len(body.mask) != d:
            raise DataError(f"mask has {len(body.mask)} entries, model expects {d}")
        if len(body.targets) != n_heads:
            raise DataError(f"targets has {len(body.targets)} entries, model has {n_heads} heads")
        bounds = np.asarray(body.bounds, dtype=float)
        if (bounds[:, 0] > bounds[:, 1]).any():
            raise DataError("infeasible box: lower bound exceeds upper bound")
        # raw engineering units -> standardized search space
        lower = std.transform_x(bounds[:, 0])
        upper = std.transform_x(bounds[:, 1])
        goals_raw = np.asarray([t.goal for t in body.targets], dtype=float)
        weights = np.asarray([t.weight for t in body.targets], dtype=float)
        if weights[0] != 1.0:
            raise DataError("the first target weight is fixed to 1")
        base = (
            std.transform_x(np.asarray(body.base_point, dtype=float))
            if body.base_point is not None
            else None
        )
        spec = SearchSpec(
            box=Box(lower, upper),
            mask=Mask(np.asarray(body.mask)),
            targets=TargetSpec(std.transform_y(goals_raw), weights),
            eta=body.eta,
            n_iters=body.iters,
            n_restarts=body.restarts,
            seed=body.seed,
            base_point=base,
        )
        method, alpha = body.method, body.alpha

        def finisher(result):
            result_dict = result_to_raw_dict(result, surrogate)
            x_raw = np.asarray(result_dict["x_final"], dtype=float)
            point = surrogate.predict(x_raw[None, :])[0].tolist()
            intervals = _intervals_at(registry, model_id, surrogate, x_raw, method, alpha)
            return result_dict, point, intervals

        job_id = jobs.submit_search(model_id, surrogate, spec, finisher)
        return schemas.SearchAccepted(job_id=job_id)

    @app.get("/jobs/{job_id}", response_model=schemas.JobOut)
    def job_status(job_id: str, trajectory_from: int = 0):
        try:
            job = jobs.get(job_id)
        except KeyError:
            return JSONResponse(status_code=404, content={"detail": f"unknown job {job_id}"})
        return schemas.JobOut(**job.snapshot(trajectory_from))

    @app.delete("/jobs/{job_id}", response_model=schemas.JobOut)
    def cancel_job(job_id: str):
        try:
            job = jobs.cancel(job_id)
        except KeyError:
            return JSONResponse(status_code=404, content={"detail": f"unknown job {job_id}"})
        return schemas.JobOut(**job.snapshot())

    return app
