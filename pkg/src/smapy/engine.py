"""Exploration / exploitation lifecycle of the context-learning system.

A :class:`SystemState` owns the Percept extrema and the population of
Context agents. ``explore_step`` processes one labelled observation
(proposal, selection, feedback, then reorganization of the activated
agents); ``exploit_step`` classifies a point without touching the state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .agents import (
    ContextAgent,
    PerceptState,
    SystemParams,
    context_apply_feedback,
    context_score,
    head_select,
)
from .geometry import Hypercube
from .learners import LearnerConfig, init_model
from .seeding import make_rng

logger = logging.getLogger(__name__)

_ONE = np.ones(1)


@dataclass
class CycleRecord:
    cycle: int
    n_agents: int
    ncs_incompetence: int
    ncs_competition: int
    ncs_conflict: int
    running_accuracy: float

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "n_agents": self.n_agents,
            "ncs_incompetence": self.ncs_incompetence,
            "ncs_competition": self.ncs_competition,
            "ncs_conflict": self.ncs_conflict,
            "running_accuracy": self.running_accuracy,
        }


class SystemState:
    """Population of Context agents plus the Percept extrema.

    Args:
        params: external system parameters.
        learner: configuration copied into every new agent's internal model.
        dim: number of input features.
        classes: optional fixed label set for new internal models; by
            default each model discovers labels as it sees them.
        record_log: keep one :class:`CycleRecord` per exploration cycle.
    """

    def __init__(
        self,
        params: SystemParams,
        learner: LearnerConfig,
        dim: int,
        classes: Optional[Sequence] = None,
        record_log: bool = True,
    ):
        self.params = params
        self.learner = learner
        self.dim = int(dim)
        self.classes = sorted(set(classes)) if classes is not None else None
        self.percept = PerceptState(self.dim)
        self.agents: dict[int, ContextAgent] = {}
        self.next_id = 0
        self.T = 0
        self.ncs_counts = {"incompetence": 0, "competition": 0, "conflict": 0}
        self.n_decisions_correct = 0
        self.record_log = record_log
        self.log: list[CycleRecord] = []
        # zone bounds stacked row-wise in id order, for vectorized activation
        self._order: list[ContextAgent] = []
        self._row: dict[int, int] = {}
        # each row holds (lower, -upper), so activation is a single comparison
        self._box = np.empty((0, 2 * self.dim))

    # population bookkeeping

    def add_agent(self, zone: Hypercube, model=None, confidence_counts=(0, 0)) -> ContextAgent:
        if zone.dim != self.dim:
            raise geometry.DimensionError(f"zone has dim {zone.dim}, system has {self.dim}")
        if model is None:
            model = init_model(self.learner, self.dim, self.classes)
        n_correct, n_wrong = confidence_counts
        agent = ContextAgent(
            id=self.next_id,
            zone=zone,
            model=model,
            confidence=self.params.f_plus * n_correct - self.params.f_minus * n_wrong,
            n_correct=n_correct,
            n_wrong=n_wrong,
        )
        self.agents[agent.id] = agent
        self.next_id += 1
        row = len(self._order)
        if row == len(self._box):
            self._box = np.vstack([self._box, np.empty((max(16, row), 2 * self.dim))])
        self._order.append(agent)
        self._row[agent.id] = row
        self._sync(agent)
        return agent

    def remove_agent(self, agent_id: int) -> None:
        del self.agents[agent_id]
        row = self._row.pop(agent_id)
        del self._order[row]
        n = len(self._order)
        self._box[row:n] = self._box[row + 1:n + 1]
        for i in range(row, n):
            self._row[self._order[i].id] = i

    def _sync(self, agent: ContextAgent) -> None:
        row = self._box[self._row[agent.id]]
        row[:self.dim] = agent.zone.lower
        row[self.dim:] = agent.zone.upper
        row[self.dim:] *= -1.0

    def _bounds(self):
        box = self._box[:len(self._order)]
        return box[:, :self.dim], -box[:, self.dim:]

    def activated(self, x: np.ndarray) -> list[ContextAgent]:
        """Agents whose zone contains the normalized point ``x``, in id order."""
        return self._activated(np.concatenate((x, -x)))

    def _activated(self, xx: np.ndarray) -> list[ContextAgent]:
        hit = (self._box[:len(self._order)] <= xx).all(axis=1).nonzero()[0]
        order = self._order
        return [order[i] for i in hit]

    def score(self, agent: ContextAgent) -> float:
        return context_score(agent, self.params)

    def _winner_loser(self, a1: ContextAgent, a2: ContextAgent):
        s1, s2 = self.score(a1), self.score(a2)
        if s1 > s2 or (s1 == s2 and a1.id < a2.id):
            return a1, a2
        return a2, a1

    # input handling

    def _check_raw(self, raw_x) -> np.ndarray:
        raw = np.asarray(raw_x, dtype=float)
        if raw.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} features, got shape {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise ValueError("observation contains non-finite values")
        return raw

    # NCS resolution

    def resolve_competition(self, a1: ContextAgent, a2: ContextAgent) -> bool:
        """Same-class overlap: absorb above the overlap threshold, push otherwise.

        Returns True when the pair was merged by absorption.
        """
        winner, loser = self._winner_loser(a1, a2)
        self.ncs_counts["competition"] += 1
        O = self.params.O
        if O is not None and geometry.overlap_index(winner.zone, loser.zone) > O:
            winner.zone = geometry.bounding_union(winner.zone, loser.zone)
            self._sync(winner)
            self.remove_agent(loser.id)
            return True
        self._push(winner, loser)
        return False

    def resolve_conflict(self, a1: ContextAgent, a2: ContextAgent) -> None:
        """Different-class overlap: the higher-scored agent pushes the other."""
        winner, loser = self._winner_loser(a1, a2)
        self.ncs_counts["conflict"] += 1
        self._push(winner, loser)

    def _push(self, winner: ContextAgent, loser: ContextAgent) -> None:
        zone = geometry.push(winner.zone, loser.zone)
        if zone is None:
            self.remove_agent(loser.id)
        else:
            loser.zone = zone
            self._sync(loser)

    def _resolve_pair(self, a1, a2, same_class: bool) -> bool:
        if same_class:
            return self.resolve_competition(a1, a2)
        self.resolve_conflict(a1, a2)
        return False

    def _settle(self, members: list) -> None:
        """Resolve overlaps among ``(agent, proposed label)`` pairs in ascending id order.

        Pushes only shrink zones, so one pass separates every pair it visits.
        An absorption grows the winner and may re-create an overlap already
        handled, hence another pass; each absorption removes an agent, so
        this terminates.
        """
        merged = True
        while merged:
            merged = False
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    (a1, l1), (a2, l2) = members[i], members[j]
                    if a1.id not in self.agents or a2.id not in self.agents:
                        continue
                    if geometry.intersection_volume(a1.zone, a2.zone) <= 0.0:
                        continue
                    merged |= self._resolve_pair(a1, a2, l1 == l2)

    def resolve_incompetence_explore(self, x: np.ndarray, y, x_aug=None) -> ContextAgent:
        """Create an agent around ``x`` and settle its overlaps with existing agents."""
        self.ncs_counts["incompetence"] += 1
        others = list(self.agents.values())
        new = self.add_agent(Hypercube.around(x, self.params.R))
        if x_aug is None:
            x_aug = new.model.augment(x)
        new.model.partial_fit_augmented(x_aug, y)
        label = new.model.predict_augmented(x_aug)
        for old in others:
            if new.id not in self.agents:
                break
            if old.id not in self.agents:
                continue
            if geometry.intersection_volume(new.zone, old.zone) <= 0.0:
                continue
            same = old.model.predict_augmented(x_aug) == label
            self._resolve_pair(old, new, same)
        return new

    # lifecycle

    def explore_step(self, raw_x, y) -> Optional[object]:
        """Learn from one labelled raw observation.

        Returns the label selected by the Head before learning, or ``None``
        when no agent was activated.
        """
        raw = self._check_raw(raw_x)
        self.percept.observe(raw)
        return self._explore(self.percept.normalize(raw), y)

    def _explore(self, x: np.ndarray, y):
        # x is normalized and finite here; build its derived vectors once per cycle
        x_aug = np.concatenate((x, _ONE))
        xx = np.concatenate((x, -x))
        active = self._activated(xx)
        decision = None
        if not active:
            self.resolve_incompetence_explore(x, y, x_aug)
        else:
            labels = [a.model.predict_augmented(x_aug) for a in active]
            decision = head_select([(a.id, lab, self.score(a)) for a, lab in zip(active, labels)])
            survivors = []
            for agent, label in zip(active, labels):
                if context_apply_feedback(agent, x, y, label, self.params, x_aug) is None:
                    self.remove_agent(agent.id)
                else:
                    self._sync(agent)
                    survivors.append((agent, label))
            self._settle(survivors)
            # a point carved or pushed out of every zone gets an agent of its own
            if not self._activated(xx):
                self.resolve_incompetence_explore(x, y, x_aug)
                # an absorption by the newcomer can re-create overlaps among them
                self._settle(survivors)
        if decision is not None and decision == y:
            self.n_decisions_correct += 1
        self.T += 1
        if self.record_log:
            self.log.append(
                CycleRecord(
                    cycle=self.T,
                    n_agents=len(self.agents),
                    ncs_incompetence=self.ncs_counts["incompetence"],
                    ncs_competition=self.ncs_counts["competition"],
                    ncs_conflict=self.ncs_counts["conflict"],
                    running_accuracy=self.n_decisions_correct / self.T,
                )
            )
        return decision

    def exploit_step(self, raw_x):
        """Classify one raw point without changing the system."""
        if not self.agents:
            raise RuntimeError("cannot predict with an empty system")
        raw = self._check_raw(raw_x)
        return self._exploit(self.percept.normalize(raw))

    def _exploit(self, x: np.ndarray):
        active = self.activated(x)
        if active:
            return head_select([(a.id, a.model.predict(x), self.score(a)) for a in active])
        lo, hi = self._bounds()
        gap = np.maximum(0.0, np.maximum(lo - x, x - hi))
        dist = np.sqrt(np.einsum("ij,ij->i", gap, gap))
        tied = [self._order[i] for i in np.flatnonzero(dist == dist.min())]
        nearest = min(tied, key=lambda a: (-self.score(a), a.id))
        return nearest.model.predict(x)

    def predict(self, X) -> list:
        if not self.agents:
            raise RuntimeError("cannot predict with an empty system")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim or not np.all(np.isfinite(X)):
            raise ValueError(f"expected a finite (n, {self.dim}) array")
        return [self._exploit(x) for x in self.percept.normalize_many(X)]

    def fit(self, X, y, seed: int = 0) -> "SystemState":
        """Batch exploration: extrema pre-pass, then one cycle per row in shuffled order."""
        X = np.asarray(X, dtype=float)
        y = list(y)
        if len(X) == 0:
            raise ValueError("cannot fit on an empty dataset")
        if X.ndim != 2 or X.shape[1] != self.dim or len(X) != len(y):
            raise ValueError(f"expected an (n, {self.dim}) array with n labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("training data contains non-finite values")
        self.percept.observe_all(X)
        # extrema are final after the pre-pass, so rows can be normalized up front
        Xn = self.percept.normalize_many(X)
        for i in shuffled_order(len(X), seed):
            self._explore(Xn[i], y[i])
        logger.debug("fit done: %d cycles, %d agents, ncs=%s", self.T, len(self.agents), self.ncs_counts)
        return self


def shuffled_order(n: int, seed: int) -> np.ndarray:
    """Presentation order used by :meth:`SystemState.fit` and the standalone baselines."""
    return make_rng(seed).permutation(n)


def fit(params: SystemParams, learner: LearnerConfig, X, y, seed: int = 0, **kwargs) -> SystemState:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    return SystemState(params, learner, X.shape[1], **kwargs).fit(X, y, seed)
