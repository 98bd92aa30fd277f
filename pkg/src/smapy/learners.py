"""Online linear classifiers with a shared incremental-learning contract.

Four kinds are supported: logistic regression and linear SVM trained by
SGD with an l1 / l2 / elastic-net penalty, and the passive-aggressive
PA-I / PA-II learners. Multi-class problems are decomposed one-versus-rest
and the intercept is carried as an extra always-one feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Hashable, Iterable, Optional

import numpy as np

KINDS = ("logistic", "linear_svm", "pa1", "pa2")
PENALTIES = ("l1", "l2", "elastic_net")
_SGD_KINDS = ("logistic", "linear_svm")
_PA_KINDS = ("pa1", "pa2")
_ONE = np.ones(1)


class ConfigError(ValueError):
    """Invalid learner configuration."""


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters of one learner.

    Fields that do not apply to ``kind`` must be left as ``None``; the
    properties below resolve the defaults.
    """

    kind: str
    alpha_reg: Optional[float] = None
    penalty: Optional[str] = None
    l1_ratio: Optional[float] = None
    C: Optional[float] = None
    eta0: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in _PA_KINDS:
            for name in ("alpha_reg", "penalty", "l1_ratio", "eta0"):
                if getattr(self, name) is not None:
                    raise ConfigError(f"{name} does not apply to {self.kind}")
            if self.C is not None and not self.C > 0:
                raise ConfigError("C must be > 0")
        else:
            if self.C is not None:
                raise ConfigError(f"C does not apply to {self.kind}")
            if self.penalty is not None and self.penalty not in PENALTIES:
                raise ConfigError(f"unknown penalty {self.penalty!r}; expected one of {PENALTIES}")
            if self.alpha_reg is not None and not self.alpha_reg > 0:
                raise ConfigError("alpha_reg must be > 0")
            if self.l1_ratio is not None:
                if self.resolved_penalty != "elastic_net":
                    raise ConfigError("l1_ratio only applies to the elastic_net penalty")
                if not 0.0 <= self.l1_ratio <= 1.0:
                    raise ConfigError("l1_ratio must lie in [0, 1]")
            if self.eta0 is not None and not self.eta0 > 0:
                raise ConfigError("eta0 must be > 0")

    @property
    def resolved_penalty(self) -> str:
        return self.penalty or "l2"

    @property
    def resolved_alpha(self) -> float:
        return 1e-4 if self.alpha_reg is None else float(self.alpha_reg)

    @property
    def resolved_l1_ratio(self) -> float:
        return 0.5 if self.l1_ratio is None else float(self.l1_ratio)

    @property
    def resolved_C(self) -> float:
        return 1.0 if self.C is None else float(self.C)

    @property
    def resolved_eta0(self) -> float:
        return 1.0 if self.eta0 is None else float(self.eta0)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        unknown = set(d) - {"kind", "alpha_reg", "penalty", "l1_ratio", "C", "eta0"}
        if unknown:
            raise ConfigError(f"unknown learner fields: {sorted(unknown)}")
        return cls(**d)


def log_loss(w: np.ndarray, x_aug: np.ndarray, s: float) -> float:
    """Binary logistic loss ``log(1 + exp(-s * w.x))`` for s in {-1, +1}."""
    return float(np.logaddexp(0.0, -s * np.dot(w, x_aug)))


def log_loss_grad(w: np.ndarray, x_aug: np.ndarray, s: float) -> np.ndarray:
    z = s * np.dot(w, x_aug)
    # -s * sigmoid(-z) * x, computed without overflow
    return -s * _expit(-z) * x_aug


def _expit(z):
    return np.exp(-np.logaddexp(0.0, -z))


class OnlineLinearModel:
    """One-versus-rest linear classifier updated one observation at a time.

    ``weights`` has one row per class (sorted label order) and ``p + 1``
    columns, the last being the intercept. Classes are either fixed at
    construction or discovered as labels arrive; a newly seen class starts
    with zero weights.
    """

    def __init__(self, config: LearnerConfig, dim: int, classes: Optional[Iterable[Hashable]] = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.config = config
        self.dim = int(dim)
        self.classes: list = sorted(set(classes)) if classes is not None else []
        self.weights = np.zeros((len(self.classes), self.dim + 1))
        self.t = 0
        self._signs: dict = {}
        self._resolve()

    def _resolve(self):
        # resolved hyperparameters, cached off the hot path
        cfg = self.config
        self._pa = cfg.kind in _PA_KINDS
        self._C = cfg.resolved_C
        self._eta0 = cfg.resolved_eta0
        self._alpha = cfg.resolved_alpha
        ratio = {"l1": 1.0, "l2": 0.0, "elastic_net": cfg.resolved_l1_ratio}[cfg.resolved_penalty]
        self._l1 = self._alpha * ratio
        self._l2 = self._alpha * (1.0 - ratio)

    def copy(self) -> "OnlineLinearModel":
        other = OnlineLinearModel.__new__(OnlineLinearModel)
        other.config = self.config
        other.dim = self.dim
        other.classes = list(self.classes)
        other.weights = self.weights.copy()
        other.t = self.t
        other._signs = {}
        other._resolve()
        return other

    def augment(self, x) -> np.ndarray:
        """Validated copy of ``x`` with the intercept feature appended."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        out = np.concatenate((x, _ONE))
        if not math.isfinite(out.sum()):
            raise ValueError("input contains non-finite values")
        return out

    def _ensure_class(self, y) -> int:
        try:
            return self.classes.index(y)
        except ValueError:
            pass
        pos = next((i for i, c in enumerate(self.classes) if y < c), len(self.classes))
        self.classes.insert(pos, y)
        self.weights = np.insert(self.weights, pos, 0.0, axis=0)
        self._signs.clear()
        return pos

    def _signs_for(self, y) -> np.ndarray:
        s = self._signs.get(y)
        if s is None:
            s = np.array([1.0 if c == y else -1.0 for c in self.classes])
            self._signs[y] = s
        return s

    def decision_function(self, x) -> np.ndarray:
        return self.weights @ self.augment(x)

    def predict(self, x):
        return self.predict_augmented(self.augment(x))

    def predict_augmented(self, x_aug: np.ndarray):
        """Like :meth:`predict` for an already augmented, trusted point."""
        if not self.classes:
            raise ValueError("model has no known class yet")
        # argmax returns the first maximum, i.e. the lowest label on ties
        return self.classes[int((self.weights @ x_aug).argmax())]

    def predict_many(self, X) -> list:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected an (n, {self.dim}) array")
        if not self.classes:
            raise ValueError("model has no known class yet")
        scores = X @ self.weights[:, :-1].T + self.weights[:, -1]
        return [self.classes[i] for i in np.argmax(scores, axis=1)]

    def partial_fit(self, x, y) -> "OnlineLinearModel":
        return self.partial_fit_augmented(self.augment(x), y)

    def partial_fit_augmented(self, x_aug: np.ndarray, y) -> "OnlineLinearModel":
        """Like :meth:`partial_fit` for an already augmented, trusted point."""
        self._ensure_class(y)
        s = self._signs_for(y)
        if self._pa:
            self._pa_step(x_aug, s)
        else:
            self._sgd_step(x_aug, s)
        self.t += 1
        return self

    def _pa_step(self, x_aug, s):
        loss = 1.0 - s * (self.weights @ x_aug)
        active = loss > 0.0
        n_active = active.sum()
        if n_active == 0:
            return
        sq_norm = float(x_aug @ x_aug)
        C = self._C
        if self.config.kind == "pa1":
            tau = np.minimum(C, loss / sq_norm)
        else:
            tau = loss / (sq_norm + 1.0 / (2.0 * C))
        if n_active == len(loss):
            self.weights += (tau * s)[:, None] * x_aug
        else:
            # rows already at margin stay bitwise untouched
            rows = active.nonzero()[0]
            self.weights[rows] += (tau[rows] * s[rows])[:, None] * x_aug

    def learning_rate(self) -> float:
        return self._eta0 / (1.0 + self._eta0 * self._alpha * self.t)

    def _sgd_step(self, x_aug, s):
        eta = self.learning_rate()
        W = self.weights
        z = s * (W @ x_aug)
        if self.config.kind == "logistic":
            # d/dz log(1 + e^-z) = -1 / (1 + e^z); the clip only avoids overflow warnings
            coef = -s / (1.0 + np.exp(np.minimum(z, 700.0)))
        else:
            coef = np.where(z < 1.0, -s, 0.0)
        # one gradient step on loss + l2 term, both taken at the pre-update weights
        if self._l2:
            W[:, :-1] *= 1.0 - eta * self._l2
        W -= (eta * coef)[:, None] * x_aug
        if self._l1:
            # proximal step for the l1 part: soft-threshold the non-bias weights
            w = W[:, :-1]
            W[:, :-1] = np.copysign(np.maximum(np.abs(w) - eta * self._l1, 0.0), w)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "weights": [[float(v) for v in row] for row in self.weights],
            "t": self.t,
        }

    @classmethod
    def from_dict(cls, config: LearnerConfig, dim: int, d: dict) -> "OnlineLinearModel":
        model = cls(config, dim)
        model.classes = list(d["classes"])
        model.weights = np.array(d["weights"], dtype=float).reshape(len(model.classes), dim + 1)
        model.t = int(d["t"])
        return model


def init_model(config: LearnerConfig, dim: int, classes: Optional[Iterable[Hashable]] = None) -> OnlineLinearModel:
    if classes is not None and not list(classes):
        raise ValueError("classes must be non-empty when given")
    return OnlineLinearModel(config, dim, classes)
