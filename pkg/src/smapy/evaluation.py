"""Experiment harness: datasets, stratified folds, grid search and decision rasters.

The grid search follows a two-step protocol. Step ``linear`` tunes a
standalone learner over its hyperparameter grid. Step ``mas`` freezes the
learner at the winning hyperparameters and tunes the system parameters of
the multi-agent classifier that embeds it.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .agents import PerceptState, SystemParams
from .engine import SystemState, shuffled_order
from .learners import LearnerConfig, init_model
from .seeding import derive_seed, make_rng

SYNTHETIC_KINDS = ("xor", "moons", "circles", "blobs")

LINEAR_GRIDS = {
    "logistic": {"alpha_reg": [0.0001, 0.001, 0.01], "penalty": ["l1", "l2", "elastic_net"]},
    "linear_svm": {"alpha_reg": [0.0001, 0.001, 0.01], "penalty": ["l1", "l2", "elastic_net"]},
    "pa1": {"C": [0.5, 1.0, 2.0]},
    "pa2": {"C": [0.5, 1.0, 2.0]},
}

SYSTEM_GRID = {
    "R": [0.1, 0.2, 0.5],
    "O": [0.2, 0.5],
    "E": [False, True],
    "N_c": ["sigmoid"],
    "alpha": [0.0, 0.1, 0.2],
    "f_plus": [1.0],
    "f_minus": [0.5, 1.0, 2.0],
}

_MODEL_KEYS = {"alpha_reg", "penalty", "l1_ratio", "C", "eta0"}
_SYSTEM_KEYS = {"R", "O", "E", "N_c", "alpha", "f_plus", "f_minus"}


class DataError(ValueError):
    """Unusable input data."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    label_name: str = "label"
    dropped: int = 0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=object)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise DataError("X must be (n, p) with one label per row")
        if len(self.X) == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(self.X)):
            raise DataError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> list:
        return sorted(set(self.y.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.feature_names, self.label_name])
            for row, label in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in row] + [label])


def load_csv(path, feature_cols: Sequence[str], label_col: str) -> Dataset:
    """Read selected columns; rows with missing or non-finite features are dropped."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [*feature_cols, label_col]:
            if col not in header:
                raise DataError(f"column {col!r} not found in {path}")
        rows, labels, dropped = [], [], 0
        for rec in reader:
            label = (rec.get(label_col) or "").strip()
            try:
                vals = [float(rec[c]) for c in feature_cols]
            except (TypeError, ValueError):
                dropped += 1
                continue
            if not label or not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            rows.append(vals)
            labels.append(label)
    if not rows:
        raise DataError(f"no usable rows in {path}")
    return Dataset(np.array(rows), np.array(labels, dtype=object), list(feature_cols), label_col, dropped)


def make_synthetic(kind: str, n: int, noise: float = 0.3, seed: int = 0) -> Dataset:
    """Small two-feature benchmark sets with string labels ``"0"`` / ``"1"``.

    ``xor`` draws four Gaussian clouds centred on (+-1, +-1), labelled by the
    sign agreement of the two coordinates; ``blobs`` is a linearly separable
    pair of clouds.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if n < 8:
        raise ValueError("n must be >= 8")
    rng = make_rng(seed)
    if kind == "xor":
        centers = np.array([[1.0, 1.0], [-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]])
        labels = np.array([0, 0, 1, 1])
        idx = np.arange(n) % 4
        X = centers[idx] + noise * rng.standard_normal((n, 2))
        y = labels[idx]
    elif kind == "blobs":
        centers = np.array([[-2.0, -2.0], [2.0, 2.0]])
        y = np.arange(n) % 2
        X = centers[y] + noise * rng.standard_normal((n, 2))
    elif kind == "moons":
        y = np.arange(n) % 2
        t = rng.uniform(0.0, np.pi, n)
        X = np.where(
            (y == 0)[:, None],
            np.column_stack([np.cos(t), np.sin(t)]),
            np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)]),
        )
        X = X + noise * rng.standard_normal((n, 2))
    else:
        y = np.arange(n) % 2
        t = rng.uniform(0.0, 2 * np.pi, n)
        radius = np.where(y == 0, 1.0, 0.5)
        X = radius[:, None] * np.column_stack([np.cos(t), np.sin(t)]) + noise * rng.standard_normal((n, 2))
    order = rng.permutation(n)
    return Dataset(X[order], np.array([str(v) for v in y[order]], dtype=object), ["x1", "x2"], "y")


def stratified_kfold(y, k: int = 5, seed: int = 0) -> list:
    """``k`` (train, test) index pairs with per-class counts balanced to within one."""
    y = np.asarray(y, dtype=object)
    counts = Counter(y.tolist())
    for label, c in sorted(counts.items()):
        if c < k:
            raise DataError(f"class {label!r} has {c} members, fewer than k={k}")
    rng = make_rng(seed, 2)
    # dealing the concatenated per-class shuffles round-robin balances both
    # per-class and total fold sizes
    dealt = np.concatenate([rng.permutation(np.flatnonzero(y == label)) for label in sorted(counts)])
    fold_of = np.empty(len(y), dtype=int)
    fold_of[dealt] = np.arange(len(y)) % k
    all_idx = np.arange(len(y))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


def accuracy(truth, predicted) -> float:
    truth, predicted = list(truth), list(predicted)
    if len(truth) != len(predicted):
        raise ValueError("length mismatch")
    if not truth:
        raise ValueError("accuracy of an empty sequence")
    return sum(a == b for a, b in zip(truth, predicted)) / len(truth)


class LinearBaseline:
    """A single online linear learner over min-max normalized features.

    Trained for ``epochs`` passes; the first pass uses the same presentation
    order as :meth:`SystemState.fit` for the same seed.
    """

    def __init__(self, config: LearnerConfig, epochs: int = 5, classes: Optional[Sequence] = None):
        self.config = config
        self.epochs = int(epochs)
        self.classes = classes
        self.model = None
        self.percept = None

    @property
    def dim(self):
        return None if self.model is None else self.model.dim

    def fit(self, X, y, seed: int = 0) -> "LinearBaseline":
        X = np.asarray(X, dtype=float)
        y = list(y)
        self.percept = PerceptState(X.shape[1])
        self.percept.observe_all(X)
        Xn = self.percept.normalize_many(X)
        self.model = init_model(self.config, X.shape[1], self.classes)
        for epoch in range(self.epochs):
            order = shuffled_order(len(X), seed) if epoch == 0 else make_rng(seed, epoch).permutation(len(X))
            for i in order:
                self.model.partial_fit(Xn[i], y[i])
        return self

    def predict(self, X) -> list:
        return self.model.predict_many(self.percept.normalize_many(np.asarray(X, dtype=float)))


def _grid_combos(grid: dict) -> list:
    keys = list(grid)
    for k in keys:
        if not list(grid[k]):
            raise ValueError(f"grid entry {k!r} is empty")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


@dataclass
class ComboResult:
    params: dict
    fold_accuracies: list
    confusion: list
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies))

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "params": self.params,
            "mean_accuracy": self.mean,
            "std_accuracy": self.std,
            "fold_accuracies": self.fold_accuracies,
            "confusion": self.confusion,
        }
        if timing:
            d["seconds"] = self.seconds
        return d


@dataclass
class EvalReport:
    stage: str
    learner: str
    k: int
    seed: int
    epochs: int
    fixed_model_params: dict
    rows: list = field(default_factory=list)

    @property
    def best(self) -> ComboResult:
        # first maximum in enumeration order
        best = self.rows[0]
        for row in self.rows[1:]:
            if row.mean > best.mean:
                best = row
        return best

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "format": "smapy-eval-report",
            "version": 1,
            "stage": self.stage,
            "learner": self.learner,
            "k": self.k,
            "seed": self.seed,
            "epochs": self.epochs,
            "fixed_model_params": self.fixed_model_params,
            "n_combinations": len(self.rows),
            "best": self.best.to_dict(timing=False),
            "rows": [r.to_dict(timing) for r in self.rows],
        }


def _confusion(truth, pred) -> list:
    c = Counter(zip(truth, pred))
    return [[t, p, n] for (t, p), n in sorted(c.items())]


def _evaluate_combo(job) -> ComboResult:
    stage, kind, combo, fixed, X, y, folds, fold_seeds, epochs = job
    start = time.perf_counter()
    accs, confs = [], []
    for (train, test), fseed in zip(folds, fold_seeds):
        if stage == "linear":
            est = LinearBaseline(LearnerConfig(kind=kind, **combo), epochs=epochs)
            est.fit(X[train], y[train], seed=fseed)
        else:
            est = SystemState(SystemParams(**combo), LearnerConfig(kind=kind, **fixed), X.shape[1], record_log=False)
            est.fit(X[train], y[train], seed=fseed)
        pred = est.predict(X[test])
        truth = y[test].tolist()
        accs.append(accuracy(truth, pred))
        confs.append(_confusion(truth, pred))
    return ComboResult(dict(combo), accs, confs, time.perf_counter() - start)


def grid_search(
    dataset: Dataset,
    stage: str,
    learner: str,
    model_grid: Optional[dict] = None,
    system_grid: Optional[dict] = None,
    fixed_model_params: Optional[dict] = None,
    k: int = 5,
    seed: int = 0,
    epochs: int = 5,
    workers: int = 1,
) -> EvalReport:
    """Exhaustive cross-validated search for one stage of the protocol.

    Fold assignment and per-fold presentation order depend only on ``seed``,
    so every combination is scored on identical splits.
    """
    if stage not in ("linear", "mas"):
        raise ValueError(f"unknown stage {stage!r}")
    if learner not in LINEAR_GRIDS:
        raise ValueError(f"unknown learner {learner!r}")
    fixed = dict(fixed_model_params or {})
    if stage == "linear":
        grid = LINEAR_GRIDS[learner] if model_grid is None else model_grid
        bad = set(grid) - _MODEL_KEYS
        combos = _grid_combos(grid)
        for combo in combos:
            LearnerConfig(kind=learner, **combo)
    else:
        grid = SYSTEM_GRID if system_grid is None else system_grid
        bad = set(grid) - _SYSTEM_KEYS
        LearnerConfig(kind=learner, **fixed)
        combos = _grid_combos(grid)
    if bad:
        raise ValueError(f"invalid grid keys for stage {stage}: {sorted(bad)}")
    if stage == "mas":
        for combo in combos:
            SystemParams(**combo)

    folds = stratified_kfold(dataset.y, k=k, seed=seed)
    fold_seeds = [derive_seed(seed, 1, f) for f in range(k)]
    jobs = [(stage, learner, c, fixed, dataset.X, dataset.y, folds, fold_seeds, epochs) for c in combos]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_evaluate_combo, jobs))
    else:
        rows = [_evaluate_combo(j) for j in jobs]
    return EvalReport(stage, learner, k, seed, epochs if stage == "linear" else 1, fixed, rows)


def default_ranges(X, pad: float = 0.05):
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return [(float(lo[j] - pad * span[j]), float(hi[j] + pad * span[j])) for j in range(X.shape[1])]


def boundary_raster(predictor, x_range, y_range, resolution=200) -> list:
    """Predicted labels at the cell centres of a 2-d grid.

    ``predictor`` is an object with ``predict`` (and optionally ``dim``) or a
    plain callable mapping an (n, 2) array to labels. Returns row-major
    ``(x, y, label)`` records, rows running along y.
    """
    dim = getattr(predictor, "dim", 2)
    if dim != 2:
        raise ValueError(f"rasterization needs a 2-feature model, got {dim}")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be >= 2 per axis")
    xs = x_range[0] + (np.arange(nx) + 0.5) * (x_range[1] - x_range[0]) / nx
    ys = y_range[0] + (np.arange(ny) + 0.5) * (y_range[1] - y_range[0]) / ny
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    fn: Callable = predictor.predict if hasattr(predictor, "predict") else predictor
    labels = list(fn(pts))
    return [(float(px), float(py), lab) for (px, py), lab in zip(pts, labels)]


def write_raster_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for x, y, label in records:
            w.writerow([repr(x), repr(y), label])


def _raster_shape(resolution):
    return (resolution, resolution) if np.isscalar(resolution) else tuple(resolution)


def convexity_probe(records, resolution, n_pairs: int = 1000, seed: int = 0) -> float:
    """Fraction of same-label cell pairs whose midpoint cell shares their label.

    Pairs are drawn with matching index parity on both axes so that the
    midpoint of the two cell centres is itself exactly a cell centre. Class
    regions of a linear one-versus-rest model are convex, so it scores 1.0.
    """
    nx, ny = _raster_shape(resolution)
    if len(records) != nx * ny:
        raise ValueError("record count does not match the resolution")
    labels = np.array([r[2] for r in records], dtype=object).reshape(ny, nx)
    rng = make_rng(seed, 3)
    passed = done = 0
    for _ in range(1000):
        a = rng.integers(0, (ny, nx), size=(4 * n_pairs, 2))
        b = rng.integers(0, (ny, nx), size=(4 * n_pairs, 2))
        ok = ((a - b) % 2 == 0).all(axis=1) & (labels[a[:, 0], a[:, 1]] == labels[b[:, 0], b[:, 1]])
        for (ay, ax), (by, bx) in zip(a[ok], b[ok]):
            passed += labels[(ay + by) // 2, (ax + bx) // 2] == labels[ay, ax]
            done += 1
            if done == n_pairs:
                return passed / done
    raise ValueError("could not draw enough same-label pairs")


def quadrant_majority(records, center=(0.0, 0.0)) -> dict:
    """Most frequent raster label in each quadrant around ``center``.

    Keys are sign pairs such as ``(1, -1)``; ties go to the lowest label.
    """
    votes = {q: Counter() for q in ((1, 1), (-1, 1), (-1, -1), (1, -1))}
    for x, y, label in records:
        if x == center[0] or y == center[1]:
            continue
        votes[(1 if x > center[0] else -1, 1 if y > center[1] else -1)][label] += 1
    out = {}
    for q, c in votes.items():
        if c:
            top = max(c.values())
            out[q] = min(lab for lab, n in c.items() if n == top)
    return out
