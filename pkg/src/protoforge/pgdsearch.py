"""Masked, normalized, box-projected gradient descent over a surrogate's inputs.

All coordinates live in standardized feature units. The search criterion for
a point x is the weighted sum of per-head absolute errors against the goals;
its gradient comes from the surrogate's vector-Jacobian product with the
deterministic forward (dropout never participates in search gradients).
Multi-start draws seeded uniform starts inside the box and keeps the
lowest-loss run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import netcore
from .errors import DataError, SearchError, ShapeError

ZERO_GRAD_THRESHOLD = 1e-12

DEFAULT_ETA = 0.05
DEFAULT_ITERS = 200
DEFAULT_RESTARTS = 16

_TAG_START = 404


class Surrogate(Protocol):
    """What the search needs from a model: f(x) and J(x)^T v."""

    def predict_std(self, x: np.ndarray) -> np.ndarray: ...

    def input_vjp(self, x_std: np.ndarray, v: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Box:
    """Coordinatewise feasible ranges [lower_i, upper_i]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ShapeError("box bounds must be equal-length vectors")
        if not (np.isfinite(lo).all() and np.isfinite(up).all()):
            raise DataError("box bounds must be finite")
        if (lo > up).any():
            raise DataError("infeasible box: lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class Mask:
    """0/1 bits over features; bit 0 freezes a coordinate during search."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=int)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 1 or not np.isin(bits, (0, 1)).all():
            raise ShapeError("mask must be a vector of 0/1 bits")
        if bits.sum() < 1:
            raise DataError("mask freezes every feature; search would be vacuous")

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.bits == 1)

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.bits == 0)


@dataclass(frozen=True)
class TargetSpec:
    """Per-head goals and weights; the first weight is pinned to 1."""

    goals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.goals, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "goals", g)
        object.__setattr__(self, "weights", w)
        if g.shape != w.shape or g.ndim != 1 or g.size < 1:
            raise ShapeError("goals and weights must be equal-length vectors")
        if (w < 0).any() or not (w > 0).any():
            raise DataError("weights must be >= 0 with at least one positive")
        if w[0] != 1.0:
            raise DataError("the first target weight is fixed to 1")


@dataclass
class SearchSpec:
    box: Box
    mask: Mask
    targets: TargetSpec
    eta: float = DEFAULT_ETA
    n_iters: int = DEFAULT_ITERS
    n_restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    base_point: np.ndarray | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise DataError("step size eta must be > 0")
        if self.n_iters < 1 or self.n_restarts < 1:
            raise DataError("n_iters and n_restarts must be >= 1")
        if self.box.dim != self.mask.bits.shape[0]:
            raise ShapeError("box and mask dimensions differ")
        if self.base_point is None:
            self.base_point = (self.box.lower + self.box.upper) / 2.0
        else:
            self.base_point = np.asarray(self.base_point, dtype=float)
            if self.base_point.shape != (self.box.dim,):
                raise ShapeError("base_point dimension does not match the box")

    def to_dict(self) -> dict:
        return {
            "bounds": [[float(l), float(u)] for l, u in zip(self.box.lower, self.box.upper)],
            "mask": self.mask.bits.tolist(),
            "targets": [
                {"goal": float(g), "weight": float(w)}
                for g, w in zip(self.targets.goals, self.targets.weights)
            ],
            "eta": self.eta,
            "iters": self.n_iters,
            "restarts": self.n_restarts,
            "seed": self.seed,
            "base_point": self.base_point.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpec":
        bounds = np.asarray(d["bounds"], dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ShapeError("bounds must be a list of [lower, upper] pairs")
        return cls(
            box=Box(bounds[:, 0], bounds[:, 1]),
            mask=Mask(np.asarray(d["mask"])),
            targets=TargetSpec(
                goals=np.asarray([t["goal"] for t in d["targets"]], dtype=float),
                weights=np.asarray([t["weight"] for t in d["targets"]], dtype=float),
            ),
            eta=float(d.get("eta", DEFAULT_ETA)),
            n_iters=int(d.get("iters", DEFAULT_ITERS)),
            n_restarts=int(d.get("restarts", DEFAULT_RESTARTS)),
            seed=int(d.get("seed", 0)),
            base_point=np.asarray(d["base_point"], dtype=float) if d.get("base_point") is not None else None,
        )


def spec_from_raw_dict(d: dict, standardizer) -> SearchSpec:
    """Build a SearchSpec from wire JSON carrying raw engineering units.

    Bounds, base point, and goals convert through the standardizer; eta
    stays in standardized units (normalized steps make it scale-free).
    """
    bounds = np.asarray(d["bounds"], dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise ShapeError("bounds must be a list of [lower, upper] pairs")
    if (bounds[:, 0] > bounds[:, 1]).any():
        raise DataError("infeasible box: lower bound exceeds upper bound")
    goals = np.asarray([t["goal"] for t in d["targets"]], dtype=float)
    weights = np.asarray([t.get("weight", 1.0) for t in d["targets"]], dtype=float)
    base = d.get("base_point")
    return SearchSpec(
        box=Box(standardizer.transform_x(bounds[:, 0]), standardizer.transform_x(bounds[:, 1])),
        mask=Mask(np.asarray(d["mask"])),
        targets=TargetSpec(standardizer.transform_y(goals), weights),
        eta=float(d.get("eta", DEFAULT_ETA)),
        n_iters=int(d.get("iters", DEFAULT_ITERS)),
        n_restarts=int(d.get("restarts", DEFAULT_RESTARTS)),
        seed=int(d.get("seed", 0)),
        base_point=standardizer.transform_x(np.asarray(base, dtype=float)) if base is not None else None,
    )


@dataclass
class SearchResult:
    x_start: np.ndarray
    x_final: np.ndarray
    loss_final: float
    trajectory: list[tuple[np.ndarray, float]] = field(default_factory=list)
    restart_index: int = 0

    def to_dict(self) -> dict:
        return {
            "x_start": self.x_start.tolist(),
            "x_final": self.x_final.tolist(),
            "loss_final": self.loss_final,
            "restart_index": self.restart_index,
            "trajectory": [{"x": x.tolist(), "loss": loss} for x, loss in self.trajectory],
        }


def project(x: np.ndarray, box: Box) -> np.ndarray:
    """Euclidean projection onto the box: coordinatewise clamp."""
    x = np.asarray(x, dtype=float)
    if x.shape != (box.dim,):
        raise ShapeError(f"point has shape {x.shape}, expected ({box.dim},)")
    return np.minimum(np.maximum(x, box.lower), box.upper)


def search_loss(x: np.ndarray, surrogate: Surrogate, targets: TargetSpec) -> float:
    """Weighted sum over heads of |f(x)_i - goal_i| (deterministic forward)."""
    out = np.asarray(surrogate.predict_std(np.asarray(x, dtype=float)), dtype=float)
    if out.shape != targets.goals.shape:
        raise ShapeError("surrogate output and target spec disagree on head count")
    return float(np.sum(targets.weights * np.abs(out - targets.goals)))


def masked_step_direction(
    x: np.ndarray, surrogate: Surrogate, targets: TargetSpec, mask: Mask
) -> np.ndarray:
    """Unit-norm masked gradient of the search loss; zero vector at stationarity."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(surrogate.predict_std(x), dtype=float)
    resid = out - targets.goals
    v = targets.weights * np.sign(resid)  # sign(0) = 0: subgradient convention
    g = np.asarray(surrogate.input_vjp(x, v), dtype=float)
    g = g * mask.bits
    norm = float(np.linalg.norm(g))
    if norm < ZERO_GRAD_THRESHOLD:
        return np.zeros_like(g)
    return g / norm


def run_search(
    surrogate: Surrogate,
    spec: SearchSpec,
    x0: np.ndarray,
    restart_index: int = 0,
    on_step: Callable[[int, np.ndarray, float], bool] | None = None,
) -> SearchResult:
    """Iterate x <- project(x - eta * direction) from x0, recording the trajectory.

    Coordinates with mask bit 0 are pinned to their x0 values bit-for-bit.
    Stops early on a zero direction (stationary point) or when `on_step`
    returns False.
    """
    x = project(np.asarray(x0, dtype=float), spec.box)
    fixed = spec.mask.fixed
    x_start = x.copy()
    loss = search_loss(x, surrogate, spec.targets)
    if not np.isfinite(loss):
        raise SearchError("non-finite loss at the starting point", iteration=0)
    trajectory: list[tuple[np.ndarray, float]] = [(x.copy(), loss)]
    for i in range(spec.n_iters):
        direction = masked_step_direction(x, surrogate, spec.targets, spec.mask)
        if not direction.any():
            break
        x = project(x - spec.eta * direction, spec.box)
        x[fixed] = x_start[fixed]
        loss = search_loss(x, surrogate, spec.targets)
        if not np.isfinite(loss):
            raise SearchError(f"non-finite loss at iteration {i}", iteration=i)
        trajectory.append((x.copy(), loss))
        if on_step is not None and not on_step(i + 1, x, loss):
            break
    return SearchResult(
        x_start=x_start,
        x_final=x.copy(),
        loss_final=loss,
        trajectory=trajectory,
        restart_index=restart_index,
    )


def sample_start(spec: SearchSpec, restart_index: int) -> np.ndarray:
    """Seeded uniform draw inside the box on free coordinates; fixed ones
    come from the base point."""
    rng = netcore._rng(spec.seed, _TAG_START, restart_index)
    x0 = project(spec.base_point, spec.box)
    free = spec.mask.free
    x0[free] = rng.uniform(spec.box.lower[free], spec.box.upper[free])
    return x0


def multi_start_search(
    surrogate: Surrogate,
    spec: SearchSpec,
    on_step: Callable[[int, int, np.ndarray, float], bool] | None = None,
) -> SearchResult:
    """Run n_restarts seeded searches and keep the lowest final loss.

    Ties break toward the lowest restart index. `on_step(restart, iter, x,
    loss)` returning False aborts the remaining work and returns the best
    result found so far.
    """
    best: SearchResult | None = None
    aborted = False
    for r in range(spec.n_restarts):
        if on_step is None:
            cb = None
        else:

            def cb(i, x, loss, _r=r):
                nonlocal aborted
                keep_going = on_step(_r, i, x, loss)
                if not keep_going:
                    aborted = True
                return keep_going

        result = run_search(surrogate, spec, sample_start(spec, r), restart_index=r, on_step=cb)
        if best is None or result.loss_final < best.loss_final:
            best = result
        if aborted:
            break
    assert best is not None
    return best
