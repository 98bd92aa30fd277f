"""Cooperative context-learning classifier built from local online linear models."""

from .agents import ContextAgent, PerceptState, SystemParams
from .engine import SystemState, fit
from .evaluation import Dataset, LinearBaseline, grid_search, load_csv, make_synthetic
from .geometry import Hypercube
from .learners import LearnerConfig, OnlineLinearModel, init_model

__version__ = "0.1.0"

__all__ = [
    "ContextAgent",
    "Dataset",
    "Hypercube",
    "LearnerConfig",
    "LinearBaseline",
    "OnlineLinearModel",
    "PerceptState",
    "SystemParams",
    "SystemState",
    "fit",
    "grid_search",
    "init_model",
    "load_csv",
    "make_synthetic",
]
