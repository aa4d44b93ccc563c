"""Content-hash keyed model registry persisted as a directory of JSON files.

Layout under the home directory:

    models/<id>.json        the model file (its bytes define the id)
    models/<id>.meta.json   dataset summary, calibration split, scatter sample
    calibrations/<id>__<method>__a<alpha>.json

Calibration entries record the full model hash they were fitted against;
a mismatch on load means the model file changed underneath them.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path

import numpy as np

from .. import uq
from ..datakit import Dataset, TrainedSurrogate, train
from ..errors import DataError
from ..evalbench import derive_seed

DEFAULT_HOME = Path.home() / ".protoforge"
SCATTER_LIMIT = 500


def resolve_home(explicit: str | Path | None = None) -> Path:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get("PROTOFORGE_HOME")
    return Path(env) if env else DEFAULT_HOME


class HashMismatch(Exception):
    """Calibration state references a different model file hash."""


class UnknownModel(KeyError):
    pass


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _alpha_key(alpha: float) -> str:
    return format(alpha, ".6f").rstrip("0").rstrip(".")


class ModelRegistry:
    """Concurrent-read registry; writes serialize per model id."""

    def __init__(self, home: str | Path | None = None):
        self.home = resolve_home(home)
        (self.home / "models").mkdir(parents=True, exist_ok=True)
        (self.home / "calibrations").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, model_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(model_id, threading.Lock())

    # -- registration ------------------------------------------------------

    def register(self, surrogate: TrainedSurrogate, train_ds: Dataset, cal_ds: Dataset) -> str:
        """Store the model file plus the data the service needs later:
        observed ranges, a scatter sample of tested products (with their
        predictions), the calibration split, and the training split (CQR
        recalibration retrains quantile heads)."""
        payload = json.dumps(surrogate.to_dict()).encode("utf-8")
        full_hash = _hash_bytes(payload)
        model_id = full_hash[:16]
        preds = surrogate.predict(train_ds.X)
        rng = np.random.default_rng(derive_seed(int(full_hash[:12], 16)))
        take = min(SCATTER_LIMIT, train_ds.n)
        idx = rng.choice(train_ds.n, size=take, replace=False)
        meta = {
            "model_id": model_id,
            "model_hash": full_hash,
            "feature_names": train_ds.feature_names,
            "target_names": train_ds.target_names,
            "feature_ranges": [
                [float(train_ds.X[:, j].min()), float(train_ds.X[:, j].max())]
                for j in range(train_ds.d)
            ],
            "target_ranges": [
                [float(train_ds.Y[:, j].min()), float(train_ds.Y[:, j].max())]
                for j in range(len(train_ds.target_names))
            ],
            "n_train": train_ds.n,
            "n_cal": cal_ds.n,
            "scatter": {
                "features": train_ds.X[idx].tolist(),
                "targets_measured": train_ds.Y[idx].tolist(),
                "targets_predicted": preds[idx].tolist(),
            },
            "train": {"X": train_ds.X.tolist(), "Y": train_ds.Y.tolist()},
            "cal": {"X": cal_ds.X.tolist(), "Y": cal_ds.Y.tolist()},
        }
        with self._lock(model_id):
            (self.home / "models" / f"{model_id}.json").write_bytes(payload)
            (self.home / "models" / f"{model_id}.meta.json").write_text(
                json.dumps(meta), encoding="utf-8"
            )
        return model_id

    # -- lookups -----------------------------------------------------------

    def list_models(self) -> list[dict]:
        out = []
        for meta_path in sorted((self.home / "models").glob("*.meta.json")):
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            out.append(meta)
        return out

    def model_path(self, model_id: str) -> Path:
        p = self.home / "models" / f"{model_id}.json"
        if not p.exists():
            raise UnknownModel(model_id)
        return p

    def meta(self, model_id: str) -> dict:
        p = self.home / "models" / f"{model_id}.meta.json"
        if not p.exists():
            raise UnknownModel(model_id)
        return json.loads(p.read_text(encoding="utf-8"))

    def model_hash(self, model_id: str) -> str:
        return _hash_bytes(self.model_path(model_id).read_bytes())

    def load_surrogate(self, model_id: str) -> TrainedSurrogate:
        return TrainedSurrogate.load(self.model_path(model_id))

    def cal_dataset(self, model_id: str) -> Dataset:
        meta = self.meta(model_id)
        return Dataset(
            meta["feature_names"], meta["target_names"],
            np.asarray(meta["cal"]["X"]), np.asarray(meta["cal"]["Y"]),
        )

    def train_dataset(self, model_id: str) -> Dataset:
        meta = self.meta(model_id)
        return Dataset(
            meta["feature_names"], meta["target_names"],
            np.asarray(meta["train"]["X"]), np.asarray(meta["train"]["Y"]),
        )

    # -- calibrations --------------------------------------------------------

    def _calibration_path(self, model_id: str, method: str, alpha: float) -> Path:
        return self.home / "calibrations" / f"{model_id}__{method}__a{_alpha_key(alpha)}.json"

    def list_calibrations(self, model_id: str) -> list[dict]:
        out = []
        for p in sorted((self.home / "calibrations").glob(f"{model_id}__*.json")):
            entry = json.loads(p.read_text(encoding="utf-8"))
            out.append(entry)
        return out

    def get_calibration(self, model_id: str, method: str, alpha: float) -> dict | None:
        p = self._calibration_path(model_id, method, alpha)
        if not p.exists():
            return None
        entry = json.loads(p.read_text(encoding="utf-8"))
        if entry["model_hash"] != self.model_hash(model_id):
            raise HashMismatch(
                f"calibration {p.name} was fitted against a different model file"
            )
        return entry

    def calibrate(self, model_id: str, method: str, alpha: float) -> dict:
        """Fit (or refresh) the calibration entry for (method, alpha).

        Deterministic: seeds derive from the model hash, so repeating the
        call reproduces the numeric state bit for bit. The model file is
        never touched; only CQR retrains (its own quantile heads).
        """
        if method not in ("confmc", "cp", "cqr", "mc"):
            raise DataError(f"unknown calibration method {method!r}")
        surrogate = self.load_surrogate(model_id)
        full_hash = self.model_hash(model_id)
        cal_ds = self.cal_dataset(model_id)
        n_heads = len(cal_ds.target_names)
        seed_base = int(full_hash[:12], 16)
        entry: dict = {
            "calibration_id": f"{model_id}.{method}.a{_alpha_key(alpha)}",
            "model_id": model_id,
            "model_hash": full_hash,
            "method": method,
            "alpha": alpha,
            "heads": [],
        }
        if method == "mc":
            pass  # no state: raw MC intervals need only (alpha, K, seed)
        elif method == "confmc":
            for h in range(n_heads):
                calib = uq.confmc_calibrate(
                    surrogate, cal_ds, alpha, K=uq.DEFAULT_K,
                    seed=derive_seed(seed_base, h), head=h,
                )
                entry["heads"].append(calib.to_dict())
        elif method == "cp":
            for h in range(n_heads):
                entry["heads"].append(uq.splitcp_calibrate(surrogate, cal_ds, alpha, head=h).to_dict())
        else:  # cqr: train pinball heads on the stored training split
            train_ds = self.train_dataset(model_id)
            lo_m, hi_m = _train_cqr_heads(train_ds, surrogate, alpha, seed_base)
            entry["cqr_models"] = {"lo": lo_m.to_dict(), "hi": hi_m.to_dict()}
            for h in range(n_heads):
                entry["heads"].append(uq.cqr_calibrate(lo_m, hi_m, cal_ds, alpha, head=h).to_dict())
        with self._lock(model_id):
            self._calibration_path(model_id, method, alpha).write_text(
                json.dumps(entry), encoding="utf-8"
            )
        return entry


def _train_cqr_heads(train_ds: Dataset, surrogate: TrainedSurrogate, alpha: float, seed_base: int):
    from ..datakit import TrainConfig
    from ..netcore import Architecture

    base = surrogate.train_config
    arch = surrogate.arch
    # quantile heads are plain predictors: keep the surrogate's shape, drop
    # the heavy sampling dropout
    head_arch = Architecture(arch.input_dim, arch.output_dim, arch.hidden_layers, arch.activation, 0.1)
    n_out = arch.output_dim

    def cfg(levels, seed):
        return TrainConfig(
            arch=head_arch,
            epochs=base.epochs if base else 300,
            batch_size=base.batch_size if base else 64,
            learning_rate=base.learning_rate if base else 1e-3,
            loss="pinball",
            quantile_levels=levels,
            seed=seed,
        )

    akey = int(round(alpha * 1_000_000))
    lo = train(train_ds, cfg((alpha / 2.0,) * n_out, derive_seed(seed_base, akey, 1)), surrogate.standardizer)
    hi = train(train_ds, cfg((1.0 - alpha / 2.0,) * n_out, derive_seed(seed_base, akey, 2)), surrogate.standardizer)
    return lo, hi
