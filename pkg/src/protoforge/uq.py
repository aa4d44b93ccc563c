"""Prediction-interval methods behind one small interface.

Four constructions share the trained surrogate:

* raw Monte Carlo dropout quantile intervals (no calibration, no guarantee);
* conformalized Monte Carlo dropout: the nested family [Q(t/2), Q(1-t/2)]
  over the MC predictive distribution, with the member index t_hat chosen on
  a calibration split so finite-sample marginal coverage holds;
* split conformal prediction with absolute residual scores (constant width);
* conformalized quantile regression around separately trained pinball heads.

Calibration consumes raw-unit datasets and standardizes through the
surrogate's own Standardizer; intervals come back in standardized target
units (convert with `interval_raw` for engineering units). All stochastic
passes are seeded and schedule-independent.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datakit import Dataset, Standardizer, TrainedSurrogate
from .errors import DataError, ShapeError

DEFAULT_K = 500


@dataclass
class PredictiveSamples:
    """K stochastic forward passes for one input and one output head."""

    values: np.ndarray  # sorted ascending
    seed: int
    K: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ShapeError("need at least 2 sample values")
        if not np.isfinite(v).all():
            raise DataError("non-finite Monte Carlo samples")
        self.values = np.sort(v)
        self.K = int(v.size)


@dataclass
class PredictionInterval:
    lower: float
    upper: float
    method: str
    alpha: float

    def __post_init__(self):
        if self.upper < self.lower:
            raise DataError("interval upper endpoint below lower endpoint")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def interval_raw(interval: PredictionInterval, standardizer: Standardizer, head: int = 0) -> PredictionInterval:
    """Map a standardized-unit interval into raw target units."""
    mean, std = standardizer.y_mean[head], standardizer.y_std[head]
    return PredictionInterval(
        lower=float(interval.lower * std + mean),
        upper=float(interval.upper * std + mean),
        method=interval.method,
        alpha=interval.alpha,
    )


def mc_sample_matrix(
    X_std: np.ndarray, surrogate: TrainedSurrogate, K: int, seed: int
) -> np.ndarray:
    """(n, K, n_heads) stochastic forward passes at standardized inputs.

    Pass k uses the dropout mask derived from (seed, layer, k) shared across
    rows, so each row's sample vector is identical whether computed alone or
    in a batch.
    """
    if K < 2:
        raise DataError("need K >= 2 Monte Carlo passes")
    if surrogate.arch.dropout_rate == 0.0:
        warnings.warn("dropout rate is 0: all Monte Carlo samples will be identical", stacklevel=2)
    X_std = np.atleast_2d(np.asarray(X_std, dtype=float))
    out = np.empty((X_std.shape[0], K, surrogate.arch.output_dim))
    for k in range(K):
        out[:, k, :] = surrogate.predict_std(X_std, seed=seed, pass_index=k)
    return out


def mc_predict(
    x_raw: np.ndarray, surrogate: TrainedSurrogate, K: int = DEFAULT_K, seed: int = 0
) -> list[PredictiveSamples]:
    """Sorted MC dropout samples at one raw-unit input, one entry per head."""
    x_std = surrogate.standardizer.transform_x(np.asarray(x_raw, dtype=float))
    mat = mc_sample_matrix(x_std, surrogate, K, seed)[0]  # (K, n_heads)
    return [PredictiveSamples(values=mat[:, h], seed=seed, K=K) for h in range(mat.shape[1])]


def _positions(K: int) -> np.ndarray:
    return (np.arange(1, K + 1) - 0.5) / K


def quantile(samples: PredictiveSamples | np.ndarray, level) -> float | np.ndarray:
    """Empirical quantile: order statistic k at level (k - 0.5)/K, linear
    interpolation between, clamped to the sample range outside."""
    values = samples.values if isinstance(samples, PredictiveSamples) else np.sort(np.asarray(samples, dtype=float))
    out = np.interp(level, _positions(values.size), values)
    return float(out) if np.isscalar(level) else out


def _empirical_cdf(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Interpolated CDF, the inverse of `quantile` on the sample range."""
    return np.interp(y, values, _positions(values.size))


def conformity_scores(sample_matrix: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nested-family conformity r_i = 2 * min(F_i(y_i), 1 - F_i(y_i)).

    r_i is the largest t for which y_i stays inside [Q_i(t/2), Q_i(1-t/2)];
    points outside their own sample range get r_i = 0 (never covered).
    `sample_matrix` is (n, K) per-point MC draws for a single head.
    """
    n = sample_matrix.shape[0]
    scores = np.empty(n)
    for i in range(n):
        values = np.sort(sample_matrix[i])
        if y[i] < values[0] or y[i] > values[-1]:
            scores[i] = 0.0
        else:
            f = _empirical_cdf(values, y[i])
            scores[i] = 2.0 * min(f, 1.0 - f)
    return scores


def nested_t_hat(scores: np.ndarray, alpha: float, n_cal: int | None = None) -> float:
    """Largest family index t whose calibration coverage meets the
    finite-sample threshold: the k-th smallest score with
    k = floor(alpha * (n + 1)); t_hat = 0 when k = 0 (full-support interval)."""
    scores = np.sort(np.asarray(scores, dtype=float))
    n = n_cal if n_cal is not None else scores.size
    k = math.floor(alpha * (n + 1) + 1e-12)
    if k <= 0:
        return 0.0
    return float(scores[k - 1])


def _conformal_index(n_cal: int, alpha: float) -> int:
    """ceil((n + 1) (1 - alpha)), the split-conformal order statistic."""
    return math.ceil((n_cal + 1) * (1.0 - alpha) - 1e-12)


@dataclass
class ConfMCCalibration:
    """Chosen nested-set index t_hat for one output head."""

    t_hat: float
    n_cal: int
    alpha: float
    K: int
    seed: int
    head: int = 0
    scores: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": "confmc",
            "alpha": self.alpha,
            "t_hat": self.t_hat,
            "n_cal": self.n_cal,
            "K": self.K,
            "seed": self.seed,
            "head": self.head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfMCCalibration":
        return cls(
            t_hat=float(d["t_hat"]),
            n_cal=int(d["n_cal"]),
            alpha=float(d["alpha"]),
            K=int(d["K"]),
            seed=int(d["seed"]),
            head=int(d.get("head", 0)),
        )


def confmc_calibrate(
    surrogate: TrainedSurrogate,
    cal: Dataset,
    alpha: float,
    K: int = DEFAULT_K,
    seed: int = 0,
    head: int = 0,
) -> ConfMCCalibration:
    """Fit t_hat on a held-out calibration split.

    Equivalent to scanning the nested family [Q(t/2), Q(1-t/2)] for the
    smallest interval meeting the finite-sample coverage threshold, but via
    closed-form per-point conformity scores.
    """
    if cal.n < 1:
        raise DataError("empty calibration set")
    X_std = surrogate.standardizer.transform_x(cal.X)
    y_std = surrogate.standardizer.transform_y(cal.Y)[:, head]
    mat = mc_sample_matrix(X_std, surrogate, K, seed)[:, :, head]
    scores = conformity_scores(mat, y_std)
    return ConfMCCalibration(
        t_hat=nested_t_hat(scores, alpha),
        n_cal=cal.n,
        alpha=alpha,
        K=K,
        seed=seed,
        head=head,
        scores=scores,
    )


def confmc_interval(
    x_raw: np.ndarray,
    surrogate: TrainedSurrogate,
    calib: ConfMCCalibration,
    K: int | None = None,
    seed: int | None = None,
) -> PredictionInterval:
    """[Q(t_hat/2), Q(1 - t_hat/2)] over fresh MC samples at x."""
    K = K if K is not None else calib.K
    seed = seed if seed is not None else calib.seed
    samples = mc_predict(x_raw, surrogate, K=K, seed=seed)[calib.head]
    lo, hi = quantile(samples, np.array([calib.t_hat / 2.0, 1.0 - calib.t_hat / 2.0]))
    return PredictionInterval(float(lo), float(hi), method="confmc", alpha=calib.alpha)


@dataclass
class SplitCPCalibration:
    """Absolute-residual score quantile for one output head."""

    q_hat: float
    n_cal: int
    alpha: float
    head: int = 0

    def __post_init__(self):
        if self.q_hat < 0:
            raise DataError("q_hat must be >= 0")

    def to_dict(self) -> dict:
        return {
            "method": "cp",
            "alpha": self.alpha,
            "q_hat": self.q_hat if math.isfinite(self.q_hat) else None,
            "n_cal": self.n_cal,
            "head": self.head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitCPCalibration":
        q = d["q_hat"]
        return cls(
            q_hat=float("inf") if q is None else float(q),
            n_cal=int(d["n_cal"]),
            alpha=float(d["alpha"]),
            head=int(d.get("head", 0)),
        )


def splitcp_calibrate(
    surrogate: TrainedSurrogate, cal: Dataset, alpha: float, head: int = 0
) -> SplitCPCalibration:
    """q_hat = ceil((n+1)(1-alpha))-th smallest |y - f(x)|; +inf sentinel when
    the index exceeds n (the guarantee then needs the full line)."""
    if cal.n < 1:
        raise DataError("empty calibration set")
    X_std = surrogate.standardizer.transform_x(cal.X)
    y_std = surrogate.standardizer.transform_y(cal.Y)[:, head]
    resid = np.sort(np.abs(y_std - surrogate.predict_std(X_std)[:, head]))
    idx = _conformal_index(cal.n, alpha)
    q_hat = float("inf") if idx > cal.n else float(resid[idx - 1])
    return SplitCPCalibration(q_hat=q_hat, n_cal=cal.n, alpha=alpha, head=head)


def splitcp_interval(
    x_raw: np.ndarray, surrogate: TrainedSurrogate, calib: SplitCPCalibration
) -> PredictionInterval:
    """[f(x) - q_hat, f(x) + q_hat]: constant width, centred on the prediction."""
    x_std = surrogate.standardizer.transform_x(np.asarray(x_raw, dtype=float))
    pred = float(surrogate.predict_std(x_std)[calib.head])
    return PredictionInterval(pred - calib.q_hat, pred + calib.q_hat, method="cp", alpha=calib.alpha)


@dataclass
class CQRCalibration:
    """Additive correction around trained lower/upper quantile heads."""

    correction: float
    levels: tuple[float, float]
    n_cal: int
    alpha: float
    head: int = 0

    def to_dict(self) -> dict:
        return {
            "method": "cqr",
            "alpha": self.alpha,
            "correction": self.correction if math.isfinite(self.correction) else None,
            "levels": list(self.levels),
            "n_cal": self.n_cal,
            "head": self.head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CQRCalibration":
        c = d["correction"]
        return cls(
            correction=float("inf") if c is None else float(c),
            levels=tuple(d["levels"]),
            n_cal=int(d["n_cal"]),
            alpha=float(d["alpha"]),
            head=int(d.get("head", 0)),
        )


def cqr_calibrate(
    lo_model: TrainedSurrogate,
    hi_model: TrainedSurrogate,
    cal: Dataset,
    alpha: float,
    head: int = 0,
) -> CQRCalibration:
    """Correction = ceil((n+1)(1-alpha))-th smallest E_i with
    E_i = max(q_lo(x_i) - y_i, y_i - q_hi(x_i)); negative when both heads
    already contain every calibration point with slack."""
    if cal.n < 1:
        raise DataError("empty calibration set")
    X_std = lo_model.standardizer.transform_x(cal.X)
    y_std = lo_model.standardizer.transform_y(cal.Y)[:, head]
    q_lo = lo_model.predict_std(X_std)[:, head]
    q_hi = hi_model.predict_std(X_std)[:, head]
    scores = np.sort(np.maximum(q_lo - y_std, y_std - q_hi))
    idx = _conformal_index(cal.n, alpha)
    correction = float("inf") if idx > cal.n else float(scores[idx - 1])
    return CQRCalibration(
        correction=correction,
        levels=(alpha / 2.0, 1.0 - alpha / 2.0),
        n_cal=cal.n,
        alpha=alpha,
        head=head,
    )


def cqr_interval(
    x_raw: np.ndarray,
    lo_model: TrainedSurrogate,
    hi_model: TrainedSurrogate,
    calib: CQRCalibration,
) -> PredictionInterval:
    """[q_lo(x) - correction, q_hi(x) + correction]; collapses to the midpoint
    if a strongly negative correction inverts the endpoints."""
    x_std = lo_model.standardizer.transform_x(np.asarray(x_raw, dtype=float))
    lo = float(lo_model.predict_std(x_std)[calib.head]) - calib.correction
    hi = float(hi_model.predict_std(x_std)[calib.head]) + calib.correction
    if lo > hi:
        lo = hi = (lo + hi) / 2.0
    return PredictionInterval(lo, hi, method="cqr", alpha=calib.alpha)


def raw_mc_interval(
    x_raw: np.ndarray,
    surrogate: TrainedSurrogate,
    alpha: float,
    K: int = DEFAULT_K,
    seed: int = 0,
    head: int = 0,
) -> PredictionInterval:
    """Uncalibrated [Q(alpha/2), Q(1-alpha/2)] from the MC samples alone."""
    samples = mc_predict(x_raw, surrogate, K=K, seed=seed)[head]
    lo, hi = quantile(samples, np.array([alpha / 2.0, 1.0 - alpha / 2.0]))
    return PredictionInterval(float(lo), float(hi), method="mc", alpha=alpha)


def calibration_from_dict(d: dict) -> ConfMCCalibration | SplitCPCalibration | CQRCalibration:
    method = d.get("method")
    if method == "confmc":
        return ConfMCCalibration.from_dict(d)
    if method == "cp":
        return SplitCPCalibration.from_dict(d)
    if method == "cqr":
        return CQRCalibration.from_dict(d)
    raise DataError(f"unknown calibration method {method!r}")
