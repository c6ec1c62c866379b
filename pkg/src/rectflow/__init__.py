"""Rectified flow: straight-path ODE transport between sampled distributions."""

from .core import Coupling, DivergenceError, NumericalFailure, SolverError, seeded_rng
from .kernels import BACKEND
from .ode import SolverSpec, TrajectoryEnsemble, integrate, roundtrip
from .pipeline import ExactBackend, KnnBackend, MlpBackend, RectifyResult, distill, rectify_once, reflow

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Coupling",
    "DivergenceError",
    "ExactBackend",
    "KnnBackend",
    "MlpBackend",
    "NumericalFailure",
    "RectifyResult",
    "SolverError",
    "SolverSpec",
    "TrajectoryEnsemble",
    "distill",
    "integrate",
    "rectify_once",
    "reflow",
    "roundtrip",
    "seeded_rng",
]
