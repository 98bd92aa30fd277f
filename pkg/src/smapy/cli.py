"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import geometry, modelfile
from .agents import SystemParams, context_score
from .evaluation import (
    LINEAR_GRIDS,
    SYNTHETIC_KINDS,
    DataError,
    boundary_raster,
    grid_search,
    load_csv,
    make_synthetic,
    write_raster_csv,
)
from .engine import SystemState
from .learners import KINDS, ConfigError, LearnerConfig

logger = logging.getLogger("smapy")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _range(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError("range needs lo < hi")
    return lo, hi


def _csv_list(text: str) -> list:
    return [c.strip() for c in text.split(",") if c.strip()]


# train flags that may also come from a --config file, with their value types
_TRAIN_KEYS = {
    "data": str, "features": _csv_list, "label": str, "learner": str,
    "alpha_reg": float, "penalty": str, "l1_ratio": float, "pa_c": float,
    "r": float, "o": float, "exclusion": _bool, "alpha": float,
    "f_plus": float, "f_minus": float, "seed": int, "out": str, "log": str,
}


def _merged_train_options(args) -> dict:
    opts = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in _TRAIN_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            conv = _TRAIN_KEYS[key]
            try:
                if key == "features" and isinstance(value, list):
                    opts[key] = [str(v) for v in value]
                elif conv is _bool and isinstance(value, bool):
                    opts[key] = value
                else:
                    opts[key] = conv(value)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for {key}: {exc}")
    for key in _TRAIN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    for key in ("data", "features", "label", "learner", "out"):
        if key not in opts:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return opts


def _learner_config(kind, alpha_reg=None, penalty=None, l1_ratio=None, pa_c=None) -> LearnerConfig:
    if kind not in KINDS:
        raise UsageError(f"unknown learner {kind!r}; choose from {', '.join(KINDS)}")
    try:
        return LearnerConfig(kind=kind, alpha_reg=alpha_reg, penalty=penalty, l1_ratio=l1_ratio, C=pa_c)
    except ConfigError as exc:
        raise UsageError(str(exc))


def cmd_train(args) -> int:
    opts = _merged_train_options(args)
    learner = _learner_config(
        opts["learner"], opts.get("alpha_reg"), opts.get("penalty"), opts.get("l1_ratio"), opts.get("pa_c")
    )
    try:
        params = SystemParams(
            R=opts.get("r", 0.2),
            O=opts.get("o"),
            E=opts.get("exclusion", False),
            alpha=opts.get("alpha", 0.1),
            f_plus=opts.get("f_plus", 1.0),
            f_minus=opts.get("f_minus", 1.0),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    seed = opts.get("seed", 0)
    ds = load_csv(opts["data"], opts["features"], opts["label"])
    if ds.dropped:
        logger.warning("dropped %d rows with missing or non-finite values", ds.dropped)
    state = SystemState(params, learner, ds.p).fit(ds.X, ds.y.tolist(), seed=seed)
    provenance = {
        "seed": seed,
        "dataset_sha256": modelfile.dataset_digest(ds.X, ds.y.tolist()),
        "n_rows": ds.n,
        "features": ds.feature_names,
        "label": ds.label_name,
        "cycles": state.T,
    }
    modelfile.save(state, opts["out"], provenance)
    log_path = opts.get("log") or str(opts["out"]) + ".log.jsonl"
    with open(log_path, "w") as fh:
        for rec in state.log:
            fh.write(json.dumps(rec.to_dict()) + "\n")
    logger.info("trained %d agents over %d cycles -> %s", len(state.agents), state.T, opts["out"])
    return EXIT_OK


def _load_model(path):
    if not Path(path).is_file():
        raise DataError(f"model file {path} not found")
    return modelfile.load(path)


def cmd_predict(args) -> int:
    state, prov = _load_model(args.model)
    features = args.features or prov.get("features")
    if not features:
        raise UsageError("model has no recorded feature names; pass --features")
    if len(features) != state.dim:
        raise DataError(f"model expects {state.dim} features, got {len(features)}")
    X = _read_features(args.data, features)
    labels = state.predict(X)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("index,label\n")
        for i, lab in enumerate(labels):
            out.write(f"{i},{lab}\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _read_features(path, features) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in features if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"data file lacks feature columns {missing}")
        try:
            rows = [[float(rec[c]) for c in features] for rec in reader]
        except (TypeError, ValueError) as exc:
            raise DataError(f"non-numeric feature value: {exc}")
    if not rows:
        raise DataError(f"no rows in {path}")
    X = np.array(rows)
    if not np.all(np.isfinite(X)):
        raise DataError("data contains non-finite feature values")
    return X


def cmd_gridsearch(args) -> int:
    if args.learner not in LINEAR_GRIDS:
        raise UsageError(f"unknown learner {args.learner!r}; choose from {', '.join(LINEAR_GRIDS)}")
    model_grid = system_grid = None
    if args.grid:
        try:
            with open(args.grid) as fh:
                grid = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read grid file: {exc}")
        if args.stage == "linear":
            model_grid = grid
        else:
            system_grid = grid
    fixed = None
    if args.stage == "mas":
        if not args.fixed_model_params:
            raise UsageError("--stage mas needs --fixed-model-params from a stage-linear report")
        try:
            with open(args.fixed_model_params) as fh:
                prior = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {args.fixed_model_params}: {exc}")
        if prior.get("stage") != "linear" or prior.get("learner") != args.learner:
            raise UsageError("fixed params must come from a stage-linear report for the same learner")
        fixed = prior["best"]["params"]
    ds = load_csv(args.data, args.features, args.label)
    try:
        report = grid_search(
            ds, args.stage, args.learner, model_grid=model_grid, system_grid=system_grid,
            fixed_model_params=fixed, k=args.k, seed=args.seed, epochs=args.epochs, workers=args.workers,
        )
    except DataError:
        raise
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    text = json.dumps(report.to_dict(timing=not args.no_timing), indent=1) + "\n"
    Path(args.out).write_text(text)
    best = report.best
    print(f"best {best.params} mean accuracy {best.mean:.4f} (+/- {best.std:.4f}) over {len(report.rows)} combinations")
    return EXIT_OK


def cmd_boundary(args) -> int:
    state, _ = _load_model(args.model)
    if state.dim != 2:
        raise UsageError(f"boundary rasters need a 2-feature model, this one has {state.dim}")
    span = state.percept.maxs - state.percept.mins
    pad = 0.05 * np.where(span > 0, span, 1.0)
    x_range = args.x_range or (state.percept.mins[0] - pad[0], state.percept.maxs[0] + pad[0])
    y_range = args.y_range or (state.percept.mins[1] - pad[1], state.percept.maxs[1] + pad[1])
    records = boundary_raster(state, x_range, y_range, args.resolution)
    write_raster_csv(records, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        ds = make_synthetic(args.kind, args.n, args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    ds.to_csv(args.out)
    return EXIT_OK


def cmd_inspect(args) -> int:
    state, prov = _load_model(args.model)
    print(f"# agents={len(state.agents)} cycles={state.T} classes={','.join(map(str, sorted({c for a in state.agents.values() for c in a.model.classes})))}")
    print("id\tlower\tupper\tvolume\tconfidence\tscore\tcenter_class")
    for a in state.agents.values():
        center = a.zone.center
        print(
            f"{a.id}\t{';'.join(repr(v) for v in a.zone.lower)}\t{';'.join(repr(v) for v in a.zone.upper)}"
            f"\t{geometry.volume(a.zone)!r}\t{a.confidence!r}\t{context_score(a, state.params):.6f}"
            f"\t{a.model.predict(center)}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smapy", description="Cooperative context-learning classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a system on a CSV file")
    p.add_argument("--config", help="JSON file with default values for the flags below")
    p.add_argument("--data")
    p.add_argument("--features", type=_csv_list, help="comma-separated feature columns")
    p.add_argument("--label")
    p.add_argument("--learner", help=f"one of {', '.join(KINDS)}")
    p.add_argument("--alpha-reg", type=float, help="regularization strength (logistic, linear_svm)")
    p.add_argument("--penalty", choices=["l1", "l2", "elastic_net"])
    p.add_argument("--l1-ratio", type=float, help="elastic-net mixing ratio")
    p.add_argument("--pa-c", type=float, help="aggressiveness C (pa1, pa2)")
    p.add_argument("--r", type=float, help="half-width of new zones (normalized units)")
    p.add_argument("--o", type=float, help="overlap threshold for absorption; omit to disable")
    p.add_argument("--exclusion", type=_bool, help="point exclusion on wrong proposals (true/false)")
    p.add_argument("--alpha", type=float, help="zone expansion/retraction volume factor")
    p.add_argument("--f-plus", type=float)
    p.add_argument("--f-minus", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="model file to write")
    p.add_argument("--log", help="training log (JSON lines); default <out>.log.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify rows of a CSV file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--features", type=_csv_list, help="defaults to the training feature names")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gridsearch", help="cross-validated grid search (stage linear or mas)")
    p.add_argument("--data", required=True)
    p.add_argument("--features", type=_csv_list, required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--stage", choices=["linear", "mas"], required=True)
    p.add_argument("--learner", required=True)
    p.add_argument("--grid", help="JSON grid overriding the built-in one")
    p.add_argument("--fixed-model-params", help="stage-linear report whose best params are frozen")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5, help="passes for standalone learners")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from the report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("boundary", help="decision raster of a 2-feature model as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--x-range", type=_range)
    p.add_argument("--y-range", type=_range)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("synth", help="write a synthetic 2-feature dataset")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print the agent table of a model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"smapy {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, modelfile.ModelFileError, OSError, ValueError, RuntimeError) as exc:
        print(f"smapy {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
