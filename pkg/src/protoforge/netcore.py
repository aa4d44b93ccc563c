"""Dense feed-forward networks with hand-written reverse-mode gradients.

Covers exactly the model family needed here: affine layers, relu or tanh
hidden activations, inverted dropout on hidden activations, and gradients
with respect to both parameters (training) and inputs (design search).
Nothing is learned lazily or cached; every function is a pure map from its
arguments, which is what makes seeded stochastic passes reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")

# Domain tags keep the RNG streams for init / shuffling / dropout disjoint
# even when a caller reuses one seed for everything.
_TAG_INIT = 101
_TAG_DROPOUT = 202

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Shape and behaviour of the network, without its weights.

    The output layer is always affine: no activation, no dropout.
    """

    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = ()
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError("input_dim and output_dim must be >= 1")
        if any(w < 1 for w in self.hidden_layers):
            raise ShapeError("all hidden widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, self.output_dim]

    @property
    def n_layers(self) -> int:
        return len(self.hidden_layers) + 1

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_layers": list(self.hidden_layers),
            "activation": self.activation,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            input_dim=int(d["input_dim"]),
            output_dim=int(d["output_dim"]),
            hidden_layers=tuple(d["hidden_layers"]),
            activation=d["activation"],
            dropout_rate=float(d["dropout_rate"]),
        )


@dataclass
class Parameters:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def validate_for(self, arch: Architecture) -> None:
        dims = arch.layer_dims
        if len(self.weights) != arch.n_layers or len(self.biases) != arch.n_layers:
            raise ShapeError("layer count does not match architecture")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ShapeError(f"layer {l} has shape {w.shape}, expected {(dims[l], dims[l + 1])}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DomainError(f"layer {l} contains non-finite parameters")

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _rng(*keys: int) -> np.random.Generator:
    # SeedSequence wants non-negative entries; fold 64-bit seeds into range.
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]))


def init_params(arch: Architecture, seed: int) -> Parameters:
    """Seeded Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    dims = arch.layer_dims
    weights, biases = [], []
    for l in range(arch.n_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(_rng(seed, _TAG_INIT, l).uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Parameters(weights, biases)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_deriv(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        # Derivative at exactly 0 is defined as 0 (inactive branch).
        return (z > 0.0).astype(z.dtype)
    t = np.tanh(z)
    return 1.0 - t * t


def _dropout_scale(shape, p: float, seed: int, layer: int, pass_index: int) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability p, else 1/(1-p).

    The draw depends only on (seed, layer, pass_index) and the requested
    shape, so a shared per-layer mask vector is identical whether a point is
    evaluated alone or inside a batch.
    """
    rng = _rng(seed, _TAG_DROPOUT, layer, pass_index)
    keep = rng.random(shape) >= p
    return keep.astype(float) / (1.0 - p)


def _as_batch(x: np.ndarray, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ShapeError(f"input has length {x.shape[0]}, expected {d}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != d:
            raise ShapeError(f"input has {x.shape[1]} columns, expected {d}")
        return x, False
    raise ShapeError("input must be a vector or a matrix of rows")


def forward(
    x: np.ndarray,
    params: Parameters,
    arch: Architecture,
    seed: int | None = None,
    pass_index: int = 0,
    per_row_masks: bool = False,
) -> np.ndarray:
    """Evaluate the network at `x` (a length-d vector or an (n, d) batch).

    seed=None gives the deterministic forward. With a seed, inverted dropout
    is applied after each hidden activation: units are zeroed with
    probability p and survivors scaled by 1/(1-p). `per_row_masks` draws an
    independent mask per batch row (training); the default draws one mask
    vector per layer shared across rows, which makes Monte Carlo sampling
    schedule-independent.
    """
    h, squeeze = _as_batch(x, arch.input_dim)
    if not np.isfinite(h).all():
        raise DomainError("input contains non-finite values")
    stochastic = seed is not None and arch.dropout_rate > 0.0
    for l in range(arch.n_layers):
        h = h @ params.weights[l] + params.biases[l]
        if l < arch.n_layers - 1:
            h = _activate(h, arch.activation)
            if stochastic:
                shape = h.shape if per_row_masks else h.shape[1:]
                h = h * _dropout_scale(shape, arch.dropout_rate, seed, l, pass_index)
    return h[0] if squeeze else h


def _loss_and_output_grad(
    y_hat: np.ndarray, y_true: np.ndarray, loss: str, levels: tuple[float, ...] | None
) -> tuple[float, np.ndarray]:
    """Mean per-example loss over the batch and dL/dy_hat."""
    n, n_out = y_hat.shape
    if loss == "mse":
        resid = y_hat - y_true
        value = float(np.mean(resid**2))  # squared residual averaged over heads, then rows
        grad = 2.0 * resid / (n * n_out)
        return value, grad
    if loss == "pinball":
        if levels is None or len(levels) != n_out:
            raise ShapeError("pinball loss needs one quantile level per output head")
        tau = np.asarray(levels, dtype=float)
        e = y_true - y_hat
        value = float(np.mean(np.sum(np.maximum(tau * e, (tau - 1.0) * e), axis=1)))
        # Subgradient at e == 0 follows the (tau - 1) branch.
        grad = np.where(e > 0.0, -tau, 1.0 - tau) / n
        return value, grad
    raise ValueError(f"unknown loss {loss!r}")


def backward_params(
    x: np.ndarray,
    y_true: np.ndarray,
    params: Parameters,
    arch: Architecture,
    loss: str = "mse",
    levels: tuple[float, ...] | None = None,
    seed: int | None = None,
    pass_index: int = 0,
    per_row_masks: bool = True,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss value and exact parameter gradients for a batch (or one example).

    Runs its own forward pass (with dropout when seeded) so the backward
    pass reuses the identical masks. Returns (loss, [(dW, db) per layer]).
    """
    h, _ = _as_batch(x, arch.input_dim)
    y, _ = _as_batch(y_true, arch.output_dim)
    if h.shape[0] != y.shape[0]:
        raise ShapeError("x and y_true disagree on the number of rows")
    if not np.isfinite(h).all():
        raise DomainError("input contains non-finite values")

    stochastic = seed is not None and arch.dropout_rate > 0.0
    acts = [h]  # post-dropout activations feeding each layer
    pre = []  # pre-activation values per hidden layer
    for l in range(arch.n_layers):
        z = acts[-1] @ params.weights[l] + params.biases[l]
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite values in forward at layer {l}", layer=l)
        if l < arch.n_layers - 1:
            pre.append(z)
            a = _activate(z, arch.activation)
            if stochastic:
                shape = a.shape if per_row_masks else a.shape[1:]
                a = a * _dropout_scale(shape, arch.dropout_rate, seed, l, pass_index)
            acts.append(a)
        else:
            acts.append(z)

    value, delta = _loss_and_output_grad(acts[-1], y, loss, levels)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * arch.n_layers  # type: ignore[list-item]
    for l in range(arch.n_layers - 1, -1, -1):
        dw = acts[l].T @ delta
        db = delta.sum(axis=0)
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise NumericError(f"non-finite gradient at layer {l}", layer=l)
        grads[l] = (dw, db)
        if l > 0:
            delta = delta @ params.weights[l].T
            if stochastic:
                shape = delta.shape if per_row_masks else delta.shape[1:]
                delta = delta * _dropout_scale(shape, arch.dropout_rate, seed, l - 1, pass_index)
            delta = delta * _activate_deriv(pre[l - 1], arch.activation)
    return value, grads


def backward_input(
    x: np.ndarray,
    params: Parameters,
    arch: Architecture,
    head_residuals: np.ndarray,
) -> np.ndarray:
    """Vector-Jacobian product J(x)^T v for the deterministic forward.

    `head_residuals` is the cotangent v (one entry per output head); the
    caller chains it with its own loss, e.g. v_i = w_i * sign(f_i - t_i)
    turns this into the gradient of a weighted absolute-error objective.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("backward_input expects a single length-d vector")
    v = np.asarray(head_residuals, dtype=float)
    if v.shape != (arch.output_dim,):
        raise ShapeError(f"head_residuals has shape {v.shape}, expected ({arch.output_dim},)")
    h, _ = _as_batch(x, arch.input_dim)
    if not np.isfinite(h).all():
        raise DomainError("input contains non-finite values")

    acts = [h]
    pre = []
    for l in range(arch.n_layers):
        z = acts[-1] @ params.weights[l] + params.biases[l]
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite values in forward at layer {l}", layer=l)
        if l < arch.n_layers - 1:
            pre.append(z)
            acts.append(_activate(z, arch.activation))
        else:
            acts.append(z)

    delta = v[None, :]
    for l in range(arch.n_layers - 1, 0, -1):
        delta = delta @ params.weights[l].T
        delta = delta * _activate_deriv(pre[l - 1], arch.activation)
    dx = (delta @ params.weights[0].T)[0]
    if not np.isfinite(dx).all():
        raise NumericError("non-finite input gradient", layer=0)
    return dx


def params_to_dict(params: Parameters, arch: Architecture) -> dict:
    """Portable JSON form: row-major weight arrays at full double precision."""
    params.validate_for(arch)
    return {
        "version": FORMAT_VERSION,
        "arch": arch.to_dict(),
        "layers": [
            {"w": w.ravel(order="C").tolist(), "b": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }


def params_from_dict(d: dict) -> tuple[Parameters, Architecture]:
    arch = Architecture.from_dict(d["arch"])
    dims = arch.layer_dims
    weights, biases = [], []
    for l, layer in enumerate(d["layers"]):
        weights.append(np.asarray(layer["w"], dtype=float).reshape(dims[l], dims[l + 1]))
        biases.append(np.asarray(layer["b"], dtype=float))
    params = Parameters(weights, biases)
    params.validate_for(arch)
    return params, arch


def params_to_json(params: Parameters, arch: Architecture) -> str:
    return json.dumps(params_to_dict(params, arch))


def params_from_json(text: str) -> tuple[Parameters, Architecture]:
    return params_from_dict(json.loads(text))
