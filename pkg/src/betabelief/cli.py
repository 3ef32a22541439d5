"""Command-line experiment harness.

Subcommands: synth, train, eval, reject, bootstrap, gradcheck. Every
randomized command takes a single --seed from which all randomness derives
(noise injection uses seed + 1, ensemble member k uses seed + k), so reruns
with identical flags produce byte-identical primary output files. Each
successful file-producing run writes ``<out>.manifest.json`` recording the
command, effective configuration, input hashes and duration.

Exit codes: 0 success, 2 usage/config error, 3 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets, metrics, network, sampling
from .errors import (
    ConfigError,
    DataFormatError,
    MetricUndefinedError,
    ShapeMismatchError,
    TrainingDivergedError,
    UnsupportedAnalysisError,
)
from .evidence import LambdaSchedule

DEFAULT_REJECT_RATES = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"
DEFAULT_BOOTSTRAP_FRACTIONS = "0.05,0.1,0.15"

_USAGE_ERRORS = (ConfigError, DataFormatError, FileNotFoundError, IsADirectoryError)
_RUNTIME_ERRORS = (
    ShapeMismatchError,
    TrainingDivergedError,
    MetricUndefinedError,
    UnsupportedAnalysisError,
    FloatingPointError,
)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _hash_input(path) -> str:
    p = Path(path)
    if p.is_dir():
        return ",".join(f"{f.name}:{_sha256(f)}" for f in sorted(p.iterdir()) if f.is_file())
    return _sha256(p)


def _write_manifest(primary_out, command, args, inputs, outputs, started):
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "config")
    }
    manifest = {
        "command": command,
        "config": config,
        "seeds": {"seed": getattr(args, "seed", None)},
        "input_hashes": {str(p): _hash_input(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "duration_seconds": time.time() - started,
    }
    Path(str(primary_out) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# Config-file keys usable as flag defaults, with their coercions.
_CONFIG_KEYS = {
    "lr": float,
    "batch": int,
    "epochs": int,
    "patience": int,
    "dropout": float,
    "momentum": float,
    "hidden": str,
    "activation": str,
    "seed": int,
    "val_frac": float,
    "lambda_initial": float,
    "lambda_decay_points": str,
    "lambda_decays": str,
    "ensemble": int,
    "subset": float,
    "fractions": str,
}


def _apply_config_file(args, argv):
    if not getattr(args, "config", None):
        return
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for line in Path(args.config).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{args.config}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{args.config}: unknown config key {key!r}")
        if key in explicit or not hasattr(args, key):
            continue
        try:
            setattr(args, key, _CONFIG_KEYS[key](value))
        except ValueError:
            raise ConfigError(f"{args.config}: bad value for {key}: {value!r}") from None


def _schedule_from_args(args) -> LambdaSchedule:
    points = tuple(_floats(args.lambda_decay_points))
    values = tuple(_floats(args.lambda_decays))
    if len(points) != 2 or len(values) != 2:
        raise ConfigError("lambda schedule needs two decay points and two values")
    return LambdaSchedule(args.lambda_initial, points, values)


def _train_config(args) -> network.TrainConfig:
    cfg = network.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        lambda_schedule=_schedule_from_args(args),
        dropout=args.dropout,
        hidden_sizes=_ints(args.hidden),
        activation=args.activation,
        momentum=args.momentum,
        seed=args.seed,
    )
    cfg.validate()
    return cfg


def _echo_config(cfg: network.TrainConfig) -> None:
    sched = cfg.lambda_schedule
    print(
        f"config lr={cfg.learning_rate} batch={cfg.batch_size} epochs={cfg.max_epochs} "
        f"patience={cfg.patience} dropout={cfg.dropout} hidden={','.join(map(str, cfg.hidden_sizes))} "
        f"activation={cfg.activation} momentum={cfg.momentum} "
        f"lambda={sched.initial}->{sched.decayed_values[0]}->{sched.decayed_values[1]} "
        f"seed={cfg.seed}"
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=1e-4, help="learning rate")
    p.add_argument("--batch", type=int, default=128, help="mini-batch size")
    p.add_argument("--epochs", type=int, default=12, help="max training epochs")
    p.add_argument("--patience", type=int, default=3, help="early-stop patience")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--hidden", default="64,64", help="hidden layer sizes, comma separated")
    p.add_argument("--activation", choices=("relu", "softplus"), default="relu")
    p.add_argument("--lambda-initial", type=float, default=1.0, dest="lambda_initial")
    p.add_argument(
        "--lambda-decay-points",
        default=f"{1/3!r},{2/3!r}",
        dest="lambda_decay_points",
        help="epoch fractions at which the KL weight decays",
    )
    p.add_argument(
        "--lambda-decays", default="0.1,0.001", dest="lambda_decays", help="decayed KL weights"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="key=value file supplying flag defaults")


def cmd_synth(args, argv) -> int:
    started = time.time()
    ds = datasets.generate_synthetic(
        args.n, args.overlap, dim=args.dim, positive_fraction=args.positive_fraction, seed=args.seed
    )
    ds = datasets.inject_noise(ds, args.noise, seed=args.seed + 1)
    datasets.write_csv(ds, args.out)
    flipped = int(ds.noise_flags.sum())
    print(f"wrote {len(ds)} samples ({flipped} flipped labels) to {args.out}")
    _write_manifest(args.out, "synth", args, [], [args.out], started)
    return 0


def cmd_train(args, argv) -> int:
    started = time.time()
    _apply_config_file(args, argv)
    cfg = _train_config(args)
    _echo_config(cfg)
    full = datasets.read_csv(args.data)
    if args.val_frac > 0:
        train_ds, val_ds, _ = datasets.split(full, 1.0 - args.val_frac, args.val_frac, args.seed)
    else:
        train_ds, val_ds = full, None
    outputs = [args.out]
    if args.ensemble > 1:
        ens = sampling.ensemble_train(train_ds, cfg, args.ensemble, args.subset, args.seed, val=val_ds)
        sampling.save_ensemble(ens, args.out)
        epochs = [len(m.history) for m in ens.members]
        print(f"trained ensemble of {args.ensemble} members (epochs: {epochs}) -> {args.out}")
    else:
        model = network.train(train_ds, val_ds, cfg)
        network.save_model(model, args.out)
        outputs.append(str(args.out) + ".meta")
        last = model.history[-1]
        val_txt = "none" if last.val_loss is None else f"{last.val_loss:.6f}"
        print(
            f"trained {len(model.history)} epochs (best epoch {model.best_epoch}, "
            f"final val loss {val_txt}) -> {args.out}"
        )
    _write_manifest(args.out, "train", args, [args.data], outputs, started)
    return 0


def _load_any_model(path):
    p = Path(path)
    if p.is_dir():
        return sampling.load_ensemble(p)
    return network.load_model(p)


def cmd_eval(args, argv) -> int:
    started = time.time()
    model = _load_any_model(args.model)
    ds = datasets.read_csv(args.data)
    input_dim = model.input_dim if isinstance(model, sampling.EnsembleModel) else model.params.input_dim
    if ds.dim != input_dim:
        raise ShapeMismatchError(f"dataset has {ds.dim} features, model expects {input_dim}")
    preds = metrics.predictions_from(model, ds)
    if args.threshold == "search":
        threshold = metrics.best_f1_threshold(preds)
    else:
        try:
            threshold = float(args.threshold)
        except ValueError:
            raise ConfigError(f"--threshold must be a number or 'search', got {args.threshold!r}") from None
    metrics.write_predictions_csv(preds, args.out)
    print(f"decision_threshold {threshold}")
    print(metrics.format_metrics_summary(preds, threshold))
    _write_manifest(args.out, "eval", args, [args.model, args.data], [args.out], started)
    return 0


def cmd_reject(args, argv) -> int:
    started = time.time()
    preds = metrics.read_predictions_csv(args.preds)
    curve = metrics.rejection_curve(preds, _floats(args.rates))
    metrics.write_rejection_csv(curve, args.out)
    for pt in curve:
        auc = "undefined" if np.isnan(pt.auc) else f"{pt.auc:.6f}"
        print(
            f"rate {pt.rate:.2f} threshold {pt.threshold:.6f} auc {auc} "
            f"retained {pt.retained}"
        )
    _write_manifest(args.out, "reject", args, [args.preds], [args.out], started)
    return 0


def cmd_bootstrap(args, argv) -> int:
    started = time.time()
    _apply_config_file(args, argv)
    cfg = _train_config(args)
    _echo_config(cfg)
    train_ds = datasets.read_csv(args.data)
    test_ds = datasets.read_csv(args.test)
    if args.val_frac > 0:
        train_ds, val_ds, _ = datasets.split(train_ds, 1.0 - args.val_frac, args.val_frac, args.seed)
    else:
        val_ds = None
    report = metrics.bootstrap(train_ds, test_ds, cfg, _floats(args.fractions), val_ds=val_ds)
    metrics.write_bootstrap_csv(report, args.out)
    for rd in report:
        print(
            f"fraction {rd.removal_fraction:.2f} removed {len(rd.removed_ids)} "
            f"auc {rd.auc:.6f} f1_pos {rd.f1_pos:.6f} f1_neg {rd.f1_neg:.6f}"
        )
    _write_manifest(args.out, "bootstrap", args, [args.data, args.test], [args.out], started)
    return 0


def cmd_gradcheck(args, argv) -> int:
    started = time.time()
    rng = np.random.default_rng(args.seed)
    params = network.init_params(args.input_dim, _ints(args.hidden), rng)
    X = rng.standard_normal((args.batch, args.input_dim))
    y = rng.integers(0, 2, args.batch)
    err = network.gradient_check(params, X, y, args.lam)
    line = f"max_relative_gradient_error {err:.6e} (tolerance {args.tolerance:.1e})"
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
        _write_manifest(args.out, "gradcheck", args, [], [args.out], started)
    return 0 if err <= args.tolerance else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betabelief",
        description="Evidential binary classification experiments: synthesize data, "
        "train evidence networks, evaluate with uncertainty, reject and bootstrap.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--overlap", type=float, default=0.15, help="Bayes error of the two classes")
    p.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--positive-fraction", type=float, default=0.5, dest="positive_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model (or ensemble) on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--val-frac", type=float, default=0.1, dest="val_frac")
    p.add_argument("--ensemble", type=int, default=1, help="number of ensemble members")
    p.add_argument("--subset", type=float, default=0.8, help="ensemble member data fraction")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write per-sample predictions and metrics")
    p.add_argument("--model", required=True, help="model file or ensemble directory")
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", default="0.5", help="decision threshold or 'search'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reject", help="uncertainty-driven rejection curve from predictions")
    p.add_argument("--preds", required=True, help="predictions CSV from eval")
    p.add_argument("--rates", default=DEFAULT_REJECT_RATES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("bootstrap", help="drop most-uncertain training samples and retrain")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--test", required=True, help="test dataset CSV")
    p.add_argument("--fractions", default=DEFAULT_BOOTSTRAP_FRACTIONS)
    p.add_argument("--val-frac", type=float, default=0.0, dest="val_frac")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p.add_argument("--input-dim", type=int, default=2, dest="input_dim")
    p.add_argument("--hidden", default="8,8")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lambda", type=float, default=1.0, dest="lam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", default=None, help="optional report file")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args, argv)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
