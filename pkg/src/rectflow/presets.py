"""Named toy experiments.

Each preset is a partial experiment config (the same mapping a YAML config
file parses to); keys given in a config file override it. Mode positions,
spreads and sample sizes are illustrative choices that keep the modes well
separated at small sample sizes.
"""

from __future__ import annotations

import copy

import numpy as np


def _ring(k, radius, center=(0.0, 0.0)):
    ang = 2.0 * np.pi * np.arange(k) / k
    return [[center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)] for a in ang]


_PRESETS = {
    # two tight blobs on each side; the independent coupling crosses in the middle
    "two-dots": {
        "source": {"kind": "mixture", "means": [[-4.0, 2.0], [-4.0, -2.0]], "stddev": 0.3},
        "target": {"kind": "mixture", "means": [[4.0, 2.0], [4.0, -2.0]], "stddev": 0.3},
        "schedule": "linear",
        "backend": {"name": "knn", "h": 1.0, "m": 100},
        "solver": {"method": "euler", "steps": 100},
        "reflow_k": 3,
        "n_train": 1000,
        "n_eval": 500,
    },
    "six-modes": {
        "source": {"kind": "gaussian", "mean": [0.0, 0.0], "stddev": 1.0},
        "target": {"kind": "mixture", "means": _ring(6, 4.0), "stddev": 0.3},
        "schedule": "linear",
        "backend": {"name": "knn", "h": 0.1, "m": 100},
        "solver": {"method": "euler", "steps": 100},
        "reflow_k": 3,
        "n_train": 1000,
        "n_eval": 500,
    },
    # low-variance mixture away from the source mean, used for schedule sweeps
    "gauss-to-mixture": {
        "source": {"kind": "gaussian", "mean": [0.0, 0.0], "stddev": 1.0},
        "target": {"kind": "mixture", "means": _ring(6, 1.5, (4.0, 0.0)), "stddev": 0.15},
        "schedule": "linear",
        "backend": {"name": "exact"},
        "solver": {"method": "euler", "steps": 100},
        "reflow_k": 1,
        "n_train": 1000,
        "n_eval": 1000,
        "compare": {"schedules": ["linear", "vp", "sub-vp", "const-speed-vp"], "steps": [1, 2, 5, 100]},
    },
    "gauss-to-mixture-N1": {
        "source": {"kind": "gaussian", "mean": [0.0, 0.0], "stddev": 1.0},
        "target": {"kind": "mixture", "means": _ring(6, 1.5, (4.0, 0.0)), "stddev": 0.15},
        "schedule": "linear",
        "backend": {"name": "exact"},
        "solver": {"method": "euler", "steps": 1},
        "reflow_k": 1,
        "n_train": 1000,
        "n_eval": 1000,
    },
    "two-atoms": {
        "source": {"kind": "gaussian", "mean": [0.0, 0.0], "stddev": 1.0},
        "target": {"kind": "empirical", "points": [[-3.0, 0.0], [3.0, 0.0]]},
        "schedule": "linear",
        "backend": {"name": "exact"},
        "solver": {"method": "euler", "steps": 1000},
        "reflow_k": 1,
        "n_train": 2000,
        "n_eval": 2000,
    },
    "gauss-1d": {
        "source": {"kind": "gaussian", "mean": [0.0], "stddev": 1.0},
        "target": {"kind": "gaussian", "mean": [3.0], "stddev": 0.5},
        "schedule": "linear",
        "backend": {"name": "exact"},
        "solver": {"method": "euler", "steps": 1000},
        "reflow_k": 1,
        "n_train": 500,
        "n_eval": 500,
    },
    # two concentric circles; the smoothing study trains one net per penalty
    "two-circles": {
        "source": {"kind": "mixture", "means": _ring(8, 1.0), "stddev": 0.1},
        "target": {"kind": "mixture", "means": _ring(8, 3.0), "stddev": 0.1},
        "schedule": "linear",
        "backend": {"name": "mlp", "iterations": 1500, "batch_size": 256, "learning_rate": 3e-3,
                    "hidden": [64, 64]},
        "solver": {"method": "euler", "steps": 100},
        "reflow_k": 1,
        "n_train": 2000,
        "n_eval": 500,
        "sweep": {"lambdas": [0.0, 1e-3, 1e-2]},
    },
}


def names() -> list[str]:
    return sorted(_PRESETS)


def get(name: str) -> dict:
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(names())}")
    return copy.deepcopy(_PRESETS[name])
