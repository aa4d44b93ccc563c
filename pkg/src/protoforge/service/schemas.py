"""Request/response models for the HTTP API. All vectors are in raw units."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthOut(BaseModel):
    status: str = "ok"


class CalibrationRef(BaseModel):
    calibration_id: str
    method: str
    alpha: float


class ModelSummary(BaseModel):
    id: str
    feature_names: list[str]
    target_names: list[str]
    n_train: int


class ModelDetail(ModelSummary):
    feature_ranges: list[tuple[float, float]]
    target_ranges: list[tuple[float, float]]
    n_cal: int
    calibrations: list[CalibrationRef]


class ScatterOut(BaseModel):
    x: str
    y: str
    points: list[tuple[float, float]]


class PredictIn(BaseModel):
    x: list[float]
    alpha: float = Field(default=0.2, gt=0.0, le=1.0)
    method: str = "confmc"


class IntervalOut(BaseModel):
    lower: float | None
    upper: float | None
    unbounded: bool = False


class PredictOut(BaseModel):
    point: list[float]
    intervals: list[IntervalOut]
    method: str
    alpha: float


class CalibrateIn(BaseModel):
    method: str
    alpha: float = Field(gt=0.0, le=1.0)


class CalibrateOut(BaseModel):
    calibration_id: str
    method: str
    alpha: float
    heads: list[dict]


class TargetIn(BaseModel):
    goal: float
    weight: float = Field(default=1.0, ge=0.0)


class SearchIn(BaseModel):
    bounds: list[tuple[float, float]]
    mask: list[int]
    targets: list[TargetIn]
    eta: float = Field(default=0.05, gt=0.0)
    iters: int = Field(default=200, ge=1)
    restarts: int = Field(default=16, ge=1)
    seed: int = 0
    base_point: list[float] | None = None
    alpha: float = Field(default=0.2, gt=0.0, le=1.0)
    method: str = "confmc"


class SearchAccepted(BaseModel):
    job_id: str


class TrajectoryPoint(BaseModel):
    x: list[float]
    loss: float
    y: list[float] | None = None


class SearchResultOut(BaseModel):
    x_start: list[float]
    x_final: list[float]
    loss_final: float
    restart_index: int
    trajectory: list[TrajectoryPoint]


class JobOut(BaseModel):
    job_id: str
    status: str  # queued | running | done | failed
    iteration: int
    restart: int
    trajectory: list[TrajectoryPoint]
    trajectory_from: int = 0
    trajectory_total: int = 0
    result: SearchResultOut | None = None
    intervals: list[IntervalOut] | None = None
    point: list[float] | None = None
    error: str | None = None
