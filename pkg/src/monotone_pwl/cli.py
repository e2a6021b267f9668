"""Command-line entry point: ``monotone-pwl <command> [options]``.

Commands: generate, train, evaluate, export-contour, export-trends.

Any option may also come from ``--config FILE`` holding ``key = value``
lines (keys are option names, dashes or underscores); explicit flags win.

Exit codes: 0 ok, 2 invalid input or configuration, 3 training diverged,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import data as data_mod
from .data import Dataset, SyntheticSpec, generate_synthetic, read_dataset_csv, write_dataset_csv
from .errors import ConfigurationError, DataError, ModelFileError, TaskMismatchError, UndefinedMetricError
from .loss import MonotoneSpec, empirical_risk, parse_monotone, spec_from_dict, spec_to_dict
from .metrics import (
    DEFAULT_RESOLUTION,
    DEFAULT_TOLERANCE,
    SweepGrid,
    auc,
    conditioned_trends,
    monotonicity_metric,
    write_delta_csv,
    write_mk_csv,
    write_trends_csv,
)
from .model import InitSpec, init_model, load_model, save_model, scores
from .trainer import TrainConfig, TrainingDivergedError, train

log = logging.getLogger("monotone_pwl")

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


# config file -----------------------------------------------------------------

def read_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}", EXIT_IO)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = raw.lower() in ("1", "true", "yes", "on")
            if raw.lower() not in ("0", "1", "true", "false", "yes", "no", "on", "off"):
                raise CliError(f"config key {key}: expected a boolean, got {raw!r}")
            defaults[key] = flag if isinstance(action, argparse._StoreTrueAction) else not flag
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise CliError(f"config key {key}: bad value {raw!r}") from None
            if action.choices is not None and defaults[key] not in action.choices:
                raise CliError(f"config key {key}: {raw!r} not in {list(action.choices)}")
    parser.set_defaults(**defaults)


# parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--deterministic", action="store_true",
                   help="accepted for scripting; all commands are single-threaded and deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monotone-pwl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a dataset CSV")
    _common(p)
    p.add_argument("--kind", choices=["synthetic", "adult"], default="synthetic")
    p.add_argument("--n", type=int, default=data_mod.SYNTHETIC_TRAIN_ROWS)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--adult-train", help="raw adult.data (kind=adult)")
    p.add_argument("--adult-test", help="raw adult.test (kind=adult)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model with the monotonicity penalty")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", choices=["regression", "classification"])
    p.add_argument("--monotone", help="features as name_or_index[:+1|-1], comma separated")
    p.add_argument("--hidden", default="32,11", help="hidden widths, comma separated")
    p.add_argument("--activation", choices=["tanh", "softplus", "relu"], default="tanh")
    p.add_argument("--init-scheme", choices=["uniform_glorot", "normal_scaled"],
                   default="uniform_glorot")
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--penalty-weight", type=float, default=1.0)
    p.add_argument("--plain", action="store_true", help="train on the empirical risk only")
    p.add_argument("--regime", choices=["weighted", "switching"], default="weighted")
    p.add_argument("--switch-frequency", type=int)
    p.add_argument("--penalty-switch-frequency", type=int)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--log", help="train log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="AUC / MSE and M_k for a model on a dataset")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--spec", help="monotone spec JSON written by train")
    p.add_argument("--monotone", help="features, when no --spec is given")
    p.add_argument("--ranges-from", help="dataset whose min/max set the sweep ranges")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--report-dir", help="also write feature,mk and sample_id,delta CSVs here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-contour", help="model (or target) values on a grid over [0,1]^2")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--target", action="store_true", help="export sin(x) + e^y instead of a model")
    p.add_argument("--resolution", type=int, default=50)
    p.set_defaults(func=cmd_export_contour)

    p = sub.add_parser("export-trends", help="conditioned trend curves for one feature")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--anchors", type=int, default=10)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--spec", help="monotone spec JSON; its range for the feature is used if present")
    p.set_defaults(func=cmd_export_trends)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, read_config_file(args.config))
        args = parser.parse_args(argv)
    return args


# helpers ---------------------------------------------------------------------

def _load_dataset(path: str, task: str | None = None) -> Dataset:
    if not os.path.exists(path):
        raise CliError(f"dataset not found: {path}", EXIT_IO)
    return read_dataset_csv(path, task)


def _default_monotone(ds: Dataset) -> str:
    if ds.feature_names == ["x", "y"]:
        return "y"
    if all(n in ds.feature_names for n in data_mod.ADULT_MONOTONE):
        return ",".join(data_mod.ADULT_MONOTONE)
    raise CliError("--monotone is required for this dataset")


def _build_spec(ds: Dataset, monotone: str | None, ranges_from: Dataset | None = None) -> MonotoneSpec:
    pairs = parse_monotone(monotone or _default_monotone(ds), ds.feature_names)
    for idx, _ in pairs:
        ds.feature_index(idx)
    ref = ranges_from if ranges_from is not None else ds
    return MonotoneSpec.from_data(ref.features, [i for i, _ in pairs], [d for _, d in pairs])


def _load_spec(path: str) -> MonotoneSpec:
    if not os.path.exists(path):
        raise CliError(f"spec file not found: {path}", EXIT_IO)
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# commands --------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.kind == "synthetic":
        if args.n < 1:
            raise CliError(f"--n must be >= 1, got {args.n}")
        ds = generate_synthetic(SyntheticSpec(args.n, args.seed, args.noise_std))
        write_dataset_csv(ds, args.out)
        log.info("wrote %d rows to %s", len(ds), args.out)
        return EXIT_OK
    if not (args.adult_train and args.adult_test):
        raise CliError("--kind adult needs --adult-train and --adult-test")
    train_ds, test_ds = data_mod.load_adult(args.adult_train, args.adult_test, seed=args.seed)
    log.info("adult: %d features (configured %d)", train_ds.n_features, data_mod.ADULT_EXPECTED_WIDTH)
    os.makedirs(args.out, exist_ok=True)
    write_dataset_csv(train_ds, os.path.join(args.out, "adult_train.csv"))
    write_dataset_csv(test_ds, os.path.join(args.out, "adult_test.csv"))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args.dataset, args.task)
    spec = _build_spec(ds, args.monotone)
    try:
        hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    except ValueError:
        raise CliError(f"bad --hidden {args.hidden!r}") from None
    out_act = "sigmoid" if ds.task == data_mod.CLASSIFICATION else "identity"
    model = init_model((ds.n_features, *hidden, 1), args.activation, out_act,
                       InitSpec(args.init_scheme, args.seed))
    config = TrainConfig(
        learning_rate=args.learning_rate, batch_size=args.batch_size, epochs=args.epochs,
        penalty_weight=0.0 if args.plain else args.penalty_weight, regime=args.regime,
        switch_frequency=args.switch_frequency,
        penalty_switch_frequency=args.penalty_switch_frequency,
        seed=args.seed, shuffle=not args.no_shuffle)
    try:
        trained, train_log = train(model, ds, spec, config)
    except TrainingDivergedError as exc:
        save_model(exc.model, args.out + ".last_finite")
        raise CliError(f"training diverged: {exc}; last finite model saved to "
                       f"{args.out}.last_finite", EXIT_DIVERGED) from exc
    save_model(trained, args.out)
    train_log.write_csv(args.log or args.out + ".log.csv")
    with open(args.out + ".spec.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(spec_to_dict(spec, ds.feature_names), fh, indent=2)
        fh.write("\n")
    _write_json(args.out + ".summary.json", {
        "epochs": len(train_log.records),
        "train_seconds": train_log.train_seconds,
        "total_seconds": train_log.total_seconds,
        "final_empirical": train_log.records[-1].empirical,
        "final_penalty": train_log.records[-1].penalty,
    })
    log.info("trained %d epochs in %.1fs", len(train_log.records), train_log.train_seconds)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    ds = _load_dataset(args.dataset)
    if model.input_dim != ds.n_features:
        raise CliError(f"model expects {model.input_dim} features, dataset has {ds.n_features}")
    if model.task != ds.task:
        raise TaskMismatchError(f"{model.task} model evaluated on {ds.task} data")
    if args.spec:
        spec = _load_spec(args.spec)
    else:
        ranges = _load_dataset(args.ranges_from) if args.ranges_from else None
        spec = _build_spec(ds, args.monotone, ranges)
    report = monotonicity_metric(model, ds.features, spec, args.resolution, args.tolerance)
    s = scores(model, ds.features)
    result = {"task": ds.task, "n": len(ds)}
    if ds.task == data_mod.CLASSIFICATION:
        result["auc"] = auc(s, ds.labels)
        result["cross_entropy"] = empirical_risk(model, ds.features, ds.labels)
    else:
        result["mse"] = empirical_risk(model, ds.features, ds.labels)
    result["mk"] = {ds.feature_names[k]: v for k, v in report.mk.items()}
    result["mk_mean"] = report.mean_mk
    result["resolution"] = args.resolution
    result["runtime_seconds"] = time.perf_counter() - t0
    _write_json(args.out, result)
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        write_mk_csv(os.path.join(args.report_dir, "mk.csv"), report, ds.feature_names)
        for k, feat in report.features.items():
            write_delta_csv(os.path.join(args.report_dir, f"delta_{ds.feature_names[k]}.csv"), feat)
    return EXIT_OK


def contour_grid(resolution: int) -> np.ndarray:
    """(R*R, 2) points over [0,1]^2, x outer and y inner (row-major)."""
    if resolution < 2:
        raise CliError(f"--resolution must be >= 2, got {resolution}")
    g = np.linspace(0.0, 1.0, resolution)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def cmd_export_contour(args) -> int:
    pts = contour_grid(args.resolution)
    if args.target:
        values = data_mod.synthetic_target(pts[:, 0], pts[:, 1])
    else:
        if not args.model:
            raise CliError("export-contour needs --model or --target")
        model = load_model(args.model)
        if model.input_dim != 2:
            raise CliError(f"contour export needs a 2-input model, got {model.input_dim}")
        values = scores(model, pts)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,f\n")
        for (x, y), f in zip(pts, values):
            fh.write(f"{float(x)!r},{float(y)!r},{float(f)!r}\n")
    return EXIT_OK


def cmd_export_trends(args) -> int:
    model = load_model(args.model)
    ds = _load_dataset(args.dataset)
    if model.input_dim != ds.n_features:
        raise CliError(f"model expects {model.input_dim} features, dataset has {ds.n_features}")
    k = ds.feature_index(args.feature)
    if not 1 <= args.anchors <= len(ds):
        raise CliError(f"--anchors must lie in [1, {len(ds)}]")
    low, high = float(ds.features[:, k].min()), float(ds.features[:, k].max())
    if args.spec:
        for e in _load_spec(args.spec).entries:
            if e.index == k:
                low, high = e.low, e.high
    grid = SweepGrid.even(k, low, high, args.resolution)
    ids = np.sort(np.random.default_rng(args.seed).choice(len(ds), args.anchors, replace=False))
    curves = conditioned_trends(model, ds.features[ids], k, grid, anchor_ids=ids)
    write_trends_csv(args.out, curves, ds.feature_names[k])
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # argparse usage errors
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigurationError, DataError, TaskMismatchError, UndefinedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
