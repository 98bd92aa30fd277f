"""Percept, Context and Head agent state and their transition rules."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .geometry import Hypercube
from .learners import OnlineLinearModel

SCORE_FUNCTIONS = ("sigmoid",)


@dataclass(frozen=True)
class SystemParams:
    """External parameters of the multi-agent system.

    Attributes:
        R: half-width of a freshly created zone, in normalized units.
        O: overlap threshold above which competing agents merge; ``None``
            disables absorption.
        E: whether a wrong agent carves the point out instead of learning it.
        N_c: name of the confidence-to-score normalization.
        alpha: volume factor used for expansion (1 + alpha) and retraction (1 - alpha).
        f_plus: confidence reward for a correct proposal.
        f_minus: confidence penalty for a wrong proposal.
    """

    R: float = 0.2
    O: Optional[float] = None
    E: bool = False
    N_c: str = "sigmoid"
    alpha: float = 0.1
    f_plus: float = 1.0
    f_minus: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be > 0")
        if self.O is not None and not 0.0 < self.O <= 1.0:
            raise ValueError("O must lie in (0, 1]")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not (self.f_plus > 0 and self.f_minus > 0):
            raise ValueError("feedback weights must be > 0")
        if self.N_c not in SCORE_FUNCTIONS:
            raise ValueError(f"unknown score normalization {self.N_c!r}")
        if not isinstance(self.E, (bool, np.bool_)):
            raise ValueError("E must be a boolean")

    def to_dict(self) -> dict:
        return {
            "R": self.R, "O": self.O, "E": bool(self.E), "N_c": self.N_c,
            "alpha": self.alpha, "f_plus": self.f_plus, "f_minus": self.f_minus,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        return cls(**d)


class PerceptState:
    """Running per-feature extrema, used for min-max normalization."""

    def __init__(self, dim: int):
        self.dim = dim
        self.mins = np.full(dim, np.inf)
        self.maxs = np.full(dim, -np.inf)
        self.count = 0

    def observe(self, raw) -> None:
        raw = np.asarray(raw, dtype=float)
        np.minimum(self.mins, raw, out=self.mins)
        np.maximum(self.maxs, raw, out=self.maxs)
        self.count += 1

    def observe_all(self, X) -> None:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if len(X):
            np.minimum(self.mins, X.min(axis=0), out=self.mins)
            np.maximum(self.maxs, X.max(axis=0), out=self.maxs)
            self.count += len(X)

    def normalize(self, raw) -> np.ndarray:
        return percept_normalize(self, raw)

    def normalize_many(self, X) -> np.ndarray:
        if self.count == 0:
            raise ValueError("percept has not observed any value yet")
        X = np.asarray(X, dtype=float)
        span = self.maxs - self.mins
        flat = span <= 0
        out = (X - self.mins) / np.where(flat, 1.0, span)
        out = np.clip(out, 0.0, 1.0)
        out[..., flat] = 0.5
        return out


def percept_normalize(state: PerceptState, raw) -> np.ndarray:
    """Min-max scale ``raw`` to [0, 1]; constant features map to 0.5."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (state.dim,):
        raise ValueError(f"expected {state.dim} features, got shape {raw.shape}")
    return state.normalize_many(raw)


@dataclass
class ContextAgent:
    id: int
    zone: Hypercube
    model: OnlineLinearModel
    confidence: float = 0.0
    n_correct: int = 0
    n_wrong: int = 0


def sigmoid(c: float) -> float:
    if c >= 0:
        return 1.0 / (1.0 + math.exp(-c))
    e = math.exp(c)
    return e / (1.0 + e)


def context_score(agent: ContextAgent, params: SystemParams) -> float:
    return sigmoid(agent.confidence)


def context_propose(agent: ContextAgent, x):
    if not geometry.contains(agent.zone, x):
        raise ValueError(f"agent {agent.id} is not activated by this point")
    return agent.model.predict(x)


def context_apply_feedback(
    agent: ContextAgent, x, truth, proposed, params: SystemParams, x_aug=None
) -> Optional[ContextAgent]:
    """Apply the Head's verdict to ``agent`` in place.

    ``x_aug`` optionally passes ``x`` already augmented by the model, to
    skip re-validation when many agents learn the same point.

    Returns the agent, or ``None`` if point exclusion destroyed its zone.
    """
    if x_aug is None:
        x_aug = agent.model.augment(x)
    if proposed == truth:
        agent.n_correct += 1
        if params.alpha > 0.0:
            agent.zone = geometry.scale(agent.zone, 1.0 + params.alpha)
        agent.model.partial_fit_augmented(x_aug, truth)
    else:
        agent.n_wrong += 1
        if params.E:
            zone = geometry.exclude_point(agent.zone, x)
            if zone is None:
                agent.confidence = params.f_plus * agent.n_correct - params.f_minus * agent.n_wrong
                return None
            agent.zone = zone
        else:
            agent.model.partial_fit_augmented(x_aug, truth)
            if params.alpha > 0.0:
                agent.zone = geometry.scale(agent.zone, 1.0 - params.alpha)
    # recomputed from the counters so the sum never drifts
    agent.confidence = params.f_plus * agent.n_correct - params.f_minus * agent.n_wrong
    return agent


def head_select(proposals: Sequence[tuple]):
    """Pick a label from ``(agent_id, label, score)`` proposals.

    Highest score wins; among tied top scores the most proposed label wins;
    remaining ties go to the lowest label.
    """
    if not proposals:
        raise ValueError("head_select needs at least one proposal")
    if len(proposals) == 1:
        return proposals[0][1]
    top = max(score for _, _, score in proposals)
    votes = Counter(label for _, label, score in proposals if score == top)
    most = max(votes.values())
    return min(label for label, n in votes.items() if n == most)
