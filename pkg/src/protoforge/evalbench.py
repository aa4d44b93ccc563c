"""Repeated draw/split/train/calibrate/test trials for interval methods.

Each trial is seeded from (master_seed, trial_index), so trials can run in
any order, or concurrently, without changing a single bit of the report.
Coverage and width are measured on the standardized target scale; the
report says so explicitly in its config echo.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import uq
from .datakit import (
    Dataset,
    SplitPlan,
    TrainConfig,
    draw_and_split,
    fit_standardizer,
    ingest_csv,
    train,
)
from .errors import DataError
from .netcore import Architecture

METHODS = ("cp", "cqr", "mc", "confmc")

# Seed-stream tags, one per independently seeded stage of a trial.
_PLAN, _TRAIN, _CQR_LO, _CQR_HI, _CAL, _TEST, _RAW = range(7)


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of integers."""
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


@dataclass
class BenchConfig:
    dataset: str | Dataset
    targets: list[str]
    methods: tuple[str, ...] = METHODS
    trials: int = 20
    n_total: int = 1000
    n_train: int = 562
    n_cal: int = 188
    n_test: int = 250
    alpha: float = 0.2
    K: int = 500
    master_seed: int = 0
    n_bins: int = 10
    train_overrides: dict = field(default_factory=dict)
    cqr_train_overrides: dict = field(default_factory=lambda: {"dropout_rate": 0.1})

    def __post_init__(self):
        if self.trials < 1:
            raise DataError("need at least one trial")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise DataError(f"methods must be a nonempty subset of {METHODS}, got {bad}")

    def plan(self, b: int) -> SplitPlan:
        return SplitPlan(
            seed=derive_seed(self.master_seed, b, _PLAN),
            n_total=self.n_total,
            n_train=self.n_train,
            n_cal=self.n_cal,
            n_test=self.n_test,
        )

    def train_config(self, input_dim: int, output_dim: int, seed: int, **extra) -> TrainConfig:
        opts = dict(self.train_overrides)
        opts.update(extra)
        arch = Architecture(
            input_dim,
            output_dim,
            tuple(opts.pop("hidden_layers", (32, 32))),
            opts.pop("activation", "relu"),
            float(opts.pop("dropout_rate", 0.4)),
        )
        opts.setdefault("epochs", 300)
        opts.setdefault("batch_size", 64)
        opts.setdefault("learning_rate", 1e-3)
        return TrainConfig(arch=arch, seed=seed, **opts)

    def echo(self) -> dict:
        return {
            "dataset": self.dataset if isinstance(self.dataset, str) else "<in-memory>",
            "targets": list(self.targets),
            "methods": list(self.methods),
            "trials": self.trials,
            "n_total": self.n_total,
            "n_train": self.n_train,
            "n_cal": self.n_cal,
            "n_test": self.n_test,
            "alpha": self.alpha,
            "K": self.K,
            "master_seed": self.master_seed,
            "n_bins": self.n_bins,
            # JSON round trip normalizes tuples so the echo equals its parse
            "train_overrides": json.loads(json.dumps(self.train_overrides)),
            "cqr_train_overrides": json.loads(json.dumps(self.cqr_train_overrides)),
            "target_scale": "standardized",
        }

    @classmethod
    def from_json(cls, path: str | Path) -> "BenchConfig":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            dataset=d["dataset"],
            targets=list(d["targets"]),
            methods=tuple(d.get("methods", METHODS)),
            trials=int(d.get("trials", 20)),
            n_total=int(d.get("n_total", 1000)),
            n_train=int(d.get("n_train", 562)),
            n_cal=int(d.get("n_cal", 188)),
            n_test=int(d.get("n_test", 250)),
            alpha=float(d.get("alpha", 0.2)),
            K=int(d.get("K", 500)),
            master_seed=int(d.get("master_seed", 0)),
            n_bins=int(d.get("n_bins", 10)),
            train_overrides=dict(d.get("train", {})),
            cqr_train_overrides=dict(d.get("cqr_train", {"dropout_rate": 0.1})),
        )


@dataclass
class MethodRecord:
    """Per-test-point outcomes for one method within one trial.

    `width` defaults to upper - lower; constant-width methods may pass the
    definitional value (2 q_hat) directly so its dispersion is exactly zero
    rather than float-rounding noise.
    """

    y_true: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    width: np.ndarray | None = None

    def __post_init__(self):
        if self.width is None:
            self.width = self.upper - self.lower

    @property
    def covered(self) -> np.ndarray:
        return ((self.lower <= self.y_true) & (self.y_true <= self.upper)).astype(float)


@dataclass
class TrialRecord:
    trial: int
    records: dict[str, MethodRecord]


def _row_quantiles(mat: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Per-row empirical quantiles of an (n, K) sample matrix."""
    pos = (np.arange(1, mat.shape[1] + 1) - 0.5) / mat.shape[1]
    srt = np.sort(mat, axis=1)
    return np.stack([np.interp(levels, pos, row) for row in srt])


def _load_dataset(cfg: BenchConfig) -> Dataset:
    if isinstance(cfg.dataset, Dataset):
        return cfg.dataset
    return ingest_csv(cfg.dataset, cfg.targets)


def run_trial(cfg: BenchConfig, b: int, ds: Dataset | None = None) -> TrialRecord:
    """One seeded trial: draw, split, train, calibrate, test every method."""
    ds = ds if ds is not None else _load_dataset(cfg)
    train_ds, cal_ds, test_ds = draw_and_split(ds, cfg.plan(b))
    standardizer = fit_standardizer(train_ds)
    surrogate = train(
        train_ds,
        cfg.train_config(ds.d, len(ds.target_names), derive_seed(cfg.master_seed, b, _TRAIN)),
        standardizer,
    )
    X_test_std = standardizer.transform_x(test_ds.X)
    y_test_std = standardizer.transform_y(test_ds.Y)[:, 0]

    records: dict[str, MethodRecord] = {}
    if "cp" in cfg.methods:
        calib = uq.splitcp_calibrate(surrogate, cal_ds, cfg.alpha)
        pred = surrogate.predict_std(X_test_std)[:, 0]
        records["cp"] = MethodRecord(
            y_test_std,
            pred - calib.q_hat,
            pred + calib.q_hat,
            width=np.full(pred.shape, 2.0 * calib.q_hat),
        )
    if "cqr" in cfg.methods:
        # Quantile heads are plain predictors (never MC-sampled), so their
        # dropout defaults lower than the surrogate's.
        head_opts = dict(cfg.cqr_train_overrides)
        lo_model = train(
            train_ds,
            cfg.train_config(
                ds.d,
                len(ds.target_names),
                derive_seed(cfg.master_seed, b, _CQR_LO),
                loss="pinball",
                quantile_levels=(cfg.alpha / 2.0,) * len(ds.target_names),
                **head_opts,
            ),
            standardizer,
        )
        hi_model = train(
            train_ds,
            cfg.train_config(
                ds.d,
                len(ds.target_names),
                derive_seed(cfg.master_seed, b, _CQR_HI),
                loss="pinball",
                quantile_levels=(1.0 - cfg.alpha / 2.0,) * len(ds.target_names),
                **head_opts,
            ),
            standardizer,
        )
        calib = uq.cqr_calibrate(lo_model, hi_model, cal_ds, cfg.alpha)
        lo = lo_model.predict_std(X_test_std)[:, 0] - calib.correction
        hi = hi_model.predict_std(X_test_std)[:, 0] + calib.correction
        crossed = lo > hi
        if crossed.any():
            mid = (lo[crossed] + hi[crossed]) / 2.0
            lo[crossed] = mid
            hi[crossed] = mid
        records["cqr"] = MethodRecord(y_test_std, lo, hi)
    if "mc" in cfg.methods:
        mat = uq.mc_sample_matrix(
            X_test_std, surrogate, cfg.K, derive_seed(cfg.master_seed, b, _RAW)
        )[:, :, 0]
        q = _row_quantiles(mat, np.array([cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0]))
        records["mc"] = MethodRecord(y_test_std, q[:, 0], q[:, 1])
    if "confmc" in cfg.methods:
        calib = uq.confmc_calibrate(
            surrogate, cal_ds, cfg.alpha, K=cfg.K, seed=derive_seed(cfg.master_seed, b, _CAL)
        )
        mat = uq.mc_sample_matrix(
            X_test_std, surrogate, cfg.K, derive_seed(cfg.master_seed, b, _TEST)
        )[:, :, 0]
        q = _row_quantiles(mat, np.array([calib.t_hat / 2.0, 1.0 - calib.t_hat / 2.0]))
        records["confmc"] = MethodRecord(y_test_std, q[:, 0], q[:, 1])
    return TrialRecord(trial=b, records=records)


def aec(records: list[TrialRecord], method: str) -> tuple[float, float]:
    """Mean and population std of per-trial empirical coverage."""
    per_trial = np.array([r.records[method].covered.mean() for r in records])
    return float(per_trial.mean()), float(per_trial.std())


def aiw(records: list[TrialRecord], method: str) -> tuple[float, float]:
    """Mean and population std of per-trial mean interval width."""
    per_trial = np.array([r.records[method].width.mean() for r in records])
    return float(per_trial.mean()), float(per_trial.std())


def conditional_bins(records: list[TrialRecord], method: str, n_bins: int = 10) -> list[dict]:
    """Equal-count y-bins per trial; per-bin coverage/width averaged over trials."""
    acc = [dict(y_lo=[], y_hi=[], coverage=[], mean_width=[]) for _ in range(n_bins)]
    for rec in records:
        m = rec.records[method]
        order = np.argsort(m.y_true, kind="stable")
        for j, chunk in enumerate(np.array_split(order, n_bins)):
            if chunk.size == 0:
                continue
            acc[j]["y_lo"].append(m.y_true[chunk].min())
            acc[j]["y_hi"].append(m.y_true[chunk].max())
            acc[j]["coverage"].append(m.covered[chunk].mean())
            acc[j]["mean_width"].append(m.width[chunk].mean())
    return [
        {
            "bin": j,
            "y_lo": float(np.mean(a["y_lo"])),
            "y_hi": float(np.mean(a["y_hi"])),
            "coverage": float(np.mean(a["coverage"])),
            "mean_width": float(np.mean(a["mean_width"])),
        }
        for j, a in enumerate(acc)
        if a["coverage"]
    ]


@dataclass
class BenchReport:
    methods: dict[str, dict[str, float]]  # method -> {aec, aec_std, aiw, aiw_std}
    bins: dict[str, list[dict]]
    config: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "methods": self.methods, "bins": self.bins}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        return cls(methods=d["methods"], bins=d["bins"], config=d["config"])


def summarize(records: list[TrialRecord], cfg: BenchConfig) -> BenchReport:
    records = sorted(records, key=lambda r: r.trial)
    methods = {}
    bins = {}
    for m in cfg.methods:
        cov_mean, cov_std = aec(records, m)
        w_mean, w_std = aiw(records, m)
        methods[m] = {"aec": cov_mean, "aec_std": cov_std, "aiw": w_mean, "aiw_std": w_std}
        bins[m] = conditional_bins(records, m, cfg.n_bins)
    return BenchReport(methods=methods, bins=bins, config=cfg.echo())


def run_bench(cfg: BenchConfig, progress=None) -> BenchReport:
    ds = _load_dataset(cfg)
    records = []
    for b in range(cfg.trials):
        records.append(run_trial(cfg, b, ds))
        if progress is not None:
            progress(b + 1, cfg.trials)
    return summarize(records, cfg)


def emit_report(report: BenchReport, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, summary.csv (method x AEC/AIW table) and bins.csv
    into a fresh run directory named by timestamp and master seed."""
    out_dir = Path(out_dir)
    seed = report.config.get("master_seed", 0)
    run_dir = out_dir / f"{time.strftime('%Y%m%d-%H%M%S')}-seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)

    json_path = run_dir / "report.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")

    summary_path = run_dir / "summary.csv"
    with summary_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "AEC", "AEC_std", "AIW", "AIW_std"])
        for m, s in report.methods.items():
            w.writerow([m, s["aec"], s["aec_std"], s["aiw"], s["aiw_std"]])

    bins_path = run_dir / "bins.csv"
    with bins_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "bin", "y_lo", "y_hi", "coverage", "mean_width"])
        for m, bin_rows in report.bins.items():
            for row in bin_rows:
                w.writerow([m, row["bin"], row["y_lo"], row["y_hi"], row["coverage"], row["mean_width"]])

    return {"json": json_path, "summary": summary_path, "bins": bins_path}


def parse_report(json_path: str | Path) -> BenchReport:
    return BenchReport.from_dict(json.loads(Path(json_path).read_text(encoding="utf-8")))
