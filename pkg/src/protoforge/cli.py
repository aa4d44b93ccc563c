"""Command-line client: thin wrappers over the core package.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training
error. Machine-readable JSON goes to stdout, human messages to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import uq
from .datakit import TrainConfig, TrainedSurrogate, default_architecture, ingest_csv, train
from .errors import DataError, DomainError, NumericError, ShapeError
from .evalbench import BenchConfig, derive_seed, emit_report, run_bench
from .netcore import Architecture
from .pgdsearch import multi_start_search, spec_from_raw_dict


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout)
    sys.stdout.write("\n")


def _load_model(path: str) -> TrainedSurrogate:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such model file: {path}")
    return TrainedSurrogate.load(p)


def _model_hash(path: str) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise DataError(f"could not parse vector {text!r}; expected comma-separated numbers")


def cmd_train(args) -> None:
    ds = ingest_csv(args.data, args.targets)
    if ds.dropped_rows:
        sys.stderr.write(f"dropped {ds.dropped_rows} rows with missing or non-numeric cells\n")
    hidden = tuple(int(w) for w in args.hidden.split(",")) if args.hidden else None
    arch_default = default_architecture(ds.d, len(ds.target_names))
    arch = Architecture(
        ds.d,
        len(ds.target_names),
        hidden if hidden is not None else arch_default.hidden_layers,
        args.activation or arch_default.activation,
        args.dropout if args.dropout is not None else arch_default.dropout_rate,
    )
    levels = tuple(float(v) for v in args.levels.split(",")) if args.levels else None
    cfg = TrainConfig(
        arch=arch,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        optimizer=args.optimizer,
        loss=args.loss,
        quantile_levels=levels,
        seed=args.seed,
    )
    out: dict = {}
    if args.register:
        n_cal = max(1, int(round(ds.n * args.cal_fraction)))
        n_train = ds.n - n_cal
        rng = np.random.default_rng(derive_seed(args.seed, 9))
        idx = rng.permutation(ds.n)
        train_ds, cal_ds = ds.subset(idx[:n_train]), ds.subset(idx[n_train:])
        surrogate = train(train_ds, cfg)
        from .service.registry import ModelRegistry

        registry = ModelRegistry(args.home)
        model_id = registry.register(surrogate, train_ds, cal_ds)
        out["model_id"] = model_id
        out["home"] = str(registry.home)
        model_path = args.out or str(registry.model_path(model_id))
        if args.out:
            surrogate.save(args.out)
    else:
        surrogate = train(ds, cfg)
        model_path = args.out or "model.json"
        surrogate.save(model_path)
    out.update({"model": model_path, "final_loss": surrogate.loss_history[-1]})
    sys.stderr.write(f"final training loss: {surrogate.loss_history[-1]:.6g}\n")
    _emit(out)


def cmd_calibrate(args) -> None:
    surrogate = _load_model(args.model)
    cal = ingest_csv(args.data, surrogate.target_names)
    n_heads = surrogate.arch.output_dim
    entry: dict = {
        "method": args.method,
        "alpha": args.alpha,
        "model_hash": _model_hash(args.model),
        "heads": [],
    }
    if args.method == "confmc":
        for h in range(n_heads):
            calib = uq.confmc_calibrate(
                surrogate, cal, args.alpha, K=args.K, seed=derive_seed(args.seed, h), head=h
            )
            entry["heads"].append(calib.to_dict())
    elif args.method == "cp":
        for h in range(n_heads):
            entry["heads"].append(uq.splitcp_calibrate(surrogate, cal, args.alpha, head=h).to_dict())
    elif args.method == "cqr":
        if not (args.lo_model and args.hi_model):
            raise DataError("cqr calibration needs --lo-model and --hi-model pinball-head files")
        lo_m, hi_m = _load_model(args.lo_model), _load_model(args.hi_model)
        entry["cqr_models"] = {"lo": lo_m.to_dict(), "hi": hi_m.to_dict()}
        for h in range(n_heads):
            entry["heads"].append(uq.cqr_calibrate(lo_m, hi_m, cal, args.alpha, head=h).to_dict())
    elif args.method == "mc":
        for h in range(n_heads):
            entry["heads"].append(
                {"method": "mc", "alpha": args.alpha, "K": args.K, "seed": derive_seed(args.seed, h), "head": h}
            )
    else:
        raise DataError(f"unknown method {args.method!r}")
    Path(args.out).write_text(json.dumps(entry), encoding="utf-8")
    _emit({"calibration": args.out, "method": args.method, "alpha": args.alpha})


def _intervals_from_entry(entry: dict, surrogate: TrainedSurrogate, x: np.ndarray) -> list[dict]:
    out = []
    method = entry["method"]
    for head_state in entry["heads"]:
        h = int(head_state.get("head", 0))
        if method == "confmc":
            iv = uq.confmc_interval(x, surrogate, uq.ConfMCCalibration.from_dict(head_state))
        elif method == "cp":
            iv = uq.splitcp_interval(x, surrogate, uq.SplitCPCalibration.from_dict(head_state))
        elif method == "cqr":
            lo_m = TrainedSurrogate.from_dict(entry["cqr_models"]["lo"])
            hi_m = TrainedSurrogate.from_dict(entry["cqr_models"]["hi"])
            iv = uq.cqr_interval(x, lo_m, hi_m, uq.CQRCalibration.from_dict(head_state))
        elif method == "mc":
            iv = uq.raw_mc_interval(
                x, surrogate, entry["alpha"], K=int(head_state["K"]),
                seed=int(head_state["seed"]), head=h,
            )
        else:
            raise DataError(f"unknown method {method!r}")
        raw = uq.interval_raw(iv, surrogate.standardizer, h)
        finite = np.isfinite([raw.lower, raw.upper]).all()
        out.append(
            {"lower": raw.lower if finite else None, "upper": raw.upper if finite else None}
            | ({} if finite else {"unbounded": True})
        )
    return out


def _check_entry_hash(entry: dict, model_path: str) -> None:
    if entry.get("model_hash") and entry["model_hash"] != _model_hash(model_path):
        raise DataError("calibration file was fitted against a different model file")


def cmd_predict(args) -> None:
    surrogate = _load_model(args.model)
    entry = json.loads(Path(args.calibration).read_text(encoding="utf-8"))
    _check_entry_hash(entry, args.model)
    x = _parse_vector(args.x)
    point = surrogate.predict(x[None, :])[0]
    _emit(
        {
            "point": point.tolist(),
            "intervals": _intervals_from_entry(entry, surrogate, x),
            "method": entry["method"],
            "alpha": entry["alpha"],
        }
    )


def cmd_search(args) -> None:
    surrogate = _load_model(args.model)
    spec_raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = spec_from_raw_dict(spec_raw, surrogate.standardizer)
    result = multi_start_search(surrogate, spec)
    inv = surrogate.standardizer.inverse_x
    payload = {
        "x_start": inv(result.x_start).tolist(),
        "x_final": inv(result.x_final).tolist(),
        "loss_final": result.loss_final,
        "restart_index": result.restart_index,
        "trajectory": [{"x": inv(x).tolist(), "loss": loss} for x, loss in result.trajectory],
    }
    x_final_raw = np.asarray(payload["x_final"], dtype=float)
    payload["point"] = surrogate.predict(x_final_raw[None, :])[0].tolist()
    if args.calibration:
        entry = json.loads(Path(args.calibration).read_text(encoding="utf-8"))
        _check_entry_hash(entry, args.model)
        payload["intervals"] = _intervals_from_entry(entry, surrogate, x_final_raw)
    if args.out:
        Path(args.out).write_text(json.dumps(payload), encoding="utf-8")
        _emit({"result": args.out, "x_final": payload["x_final"], "loss_final": payload["loss_final"]})
    else:
        _emit(payload)


def cmd_bench(args) -> None:
    cfg = BenchConfig.from_json(args.config)
    def progress(done, total):
        sys.stderr.write(f"trial {done}/{total}\n")
    report = run_bench(cfg, progress=progress if not args.quiet else None)
    paths = emit_report(report, args.out_dir)
    _emit({k: str(v) for k, v in paths.items()})


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    app = create_app(home=args.home, max_workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> _Parser:
    p = _Parser(prog="protoforge", description="surrogate training, design search, calibrated intervals")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a surrogate from a CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--targets", required=True, nargs="+")
    t.add_argument("--out", default=None)
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--hidden", default=None, help="comma-separated widths, e.g. 32,32")
    t.add_argument("--activation", choices=["relu", "tanh"], default=None)
    t.add_argument("--dropout", type=float, default=None)
    t.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    t.add_argument("--loss", choices=["mse", "pinball"], default="mse")
    t.add_argument("--levels", default=None, help="pinball levels, one per target")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--register", action="store_true", help="hold out a calibration split and register in the model home")
    t.add_argument("--home", default=None)
    t.add_argument("--cal-fraction", type=float, default=0.2)
    t.set_defaults(fn=cmd_train)

    c = sub.add_parser("calibrate", help="fit interval calibration on a CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--method", required=True, choices=["confmc", "cp", "cqr", "mc"])
    c.add_argument("--alpha", type=float, default=0.2)
    c.add_argument("--K", type=int, default=uq.DEFAULT_K)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--lo-model", default=None)
    c.add_argument("--hi-model", default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_calibrate)

    pr = sub.add_parser("predict", help="point prediction with interval")
    pr.add_argument("--model", required=True)
    pr.add_argument("--calibration", required=True)
    pr.add_argument("--x", required=True, help="comma-separated raw-unit features")
    pr.set_defaults(fn=cmd_predict)

    s = sub.add_parser("search", help="run the prototype search from a JSON spec")
    s.add_argument("--model", required=True)
    s.add_argument("--spec", required=True)
    s.add_argument("--calibration", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_search)

    b = sub.add_parser("bench", help="run the coverage/width benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir", default="runs")
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(fn=cmd_bench)

    sv = sub.add_parser("serve", help="start the HTTP service")
    sv.add_argument("--home", default=None)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--workers", type=int, default=None)
    sv.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except (DataError, ShapeError, DomainError, FileNotFoundError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return 2
    except NumericError as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
