"""Versioned JSON persistence for trained systems.

Floats are written with Python's shortest round-trip representation, so
``load(save(state))`` restores every bound and weight bit for bit and a
second save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .agents import PerceptState, SystemParams
from .engine import SystemState
from .geometry import Hypercube
from .learners import LearnerConfig, OnlineLinearModel

FORMAT = "smapy-model"
VERSION = 1


class ModelFileError(ValueError):
    """Malformed or unsupported model file."""


def dataset_digest(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(np.asarray(X, dtype=float)).tobytes())
    h.update("\x1f".join(str(v) for v in y).encode())
    return h.hexdigest()


def state_to_dict(state: SystemState, provenance: dict | None = None) -> dict:
    classes = sorted({c for a in state.agents.values() for c in a.model.classes})
    return {
        "format": FORMAT,
        "version": VERSION,
        "dim": state.dim,
        "normalization": {
            "mins": [float(v) for v in state.percept.mins],
            "maxs": [float(v) for v in state.percept.maxs],
            "count": state.percept.count,
        },
        "params": state.params.to_dict(),
        "learner": state.learner.to_dict(),
        "fixed_classes": state.classes,
        "classes": classes,
        "next_id": state.next_id,
        "cycles": state.T,
        "ncs_counts": dict(state.ncs_counts),
        "n_decisions_correct": state.n_decisions_correct,
        "agents": [
            {
                "id": a.id,
                "lower": list(a.zone.lower),
                "upper": list(a.zone.upper),
                "confidence": a.confidence,
                "n_correct": a.n_correct,
                "n_wrong": a.n_wrong,
                "model": a.model.to_dict(),
            }
            for a in state.agents.values()
        ],
        "provenance": dict(provenance or {}),
    }


def state_from_dict(d: dict) -> tuple[SystemState, dict]:
    if d.get("format") != FORMAT:
        raise ModelFileError("not a model file")
    if d.get("version") != VERSION:
        raise ModelFileError(f"unsupported model file version {d.get('version')!r}")
    try:
        params = SystemParams.from_dict(d["params"])
        learner = LearnerConfig.from_dict(d["learner"])
        dim = int(d["dim"])
        state = SystemState(params, learner, dim, classes=d.get("fixed_classes"))
        state.percept.mins = np.array(d["normalization"]["mins"], dtype=float)
        state.percept.maxs = np.array(d["normalization"]["maxs"], dtype=float)
        state.percept.count = int(d["normalization"]["count"])
        for rec in d["agents"]:
            state.next_id = int(rec["id"])
            model = OnlineLinearModel.from_dict(learner, dim, rec["model"])
            agent = state.add_agent(Hypercube(rec["lower"], rec["upper"]), model, (rec["n_correct"], rec["n_wrong"]))
            agent.confidence = float(rec["confidence"])
        state.next_id = int(d["next_id"])
        state.T = int(d["cycles"])
        state.ncs_counts = dict(d["ncs_counts"])
        state.n_decisions_correct = int(d["n_decisions_correct"])
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    return state, dict(d.get("provenance", {}))


def dumps(state: SystemState, provenance: dict | None = None) -> str:
    return json.dumps(state_to_dict(state, provenance), indent=1, allow_nan=False) + "\n"


def save(state: SystemState, path, provenance: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(state, provenance))


def load(path) -> tuple[SystemState, dict]:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    return state_from_dict(d)
