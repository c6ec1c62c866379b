"""Velocity fields ``v(z, t)``.

Anything callable as ``field(z, t)`` with ``z`` of shape ``(n, d)`` (or a
single ``(d,)`` point) and a scalar ``t`` returning an array of the same shape
is accepted by the ODE integrator and the metrics.
"""

from typing import Protocol

import numpy as np

from .exact import ExactVelocity, data_recovery_check, exact_velocity_eval, exact_velocity_jacobian
from .kernel import KernelRegression, KernelVelocity, kernel_velocity_eval, knn_indices
from .neural import (
    AdamState,
    FeatureMap,
    Mlp,
    TrainConfig,
    adam_step,
    distill_one_step,
    loss_and_grad,
    mlp_forward,
    regression_loss,
    train_velocity,
)


class VelocityField(Protocol):
    def __call__(self, z: np.ndarray, t: float) -> np.ndarray: ...


class ConstantVelocity:
    """``v(z, t) = c`` everywhere; the trivially straight flow."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)

    def __call__(self, z, t):
        return np.broadcast_to(self.c, np.shape(z)).copy()


class TimeReflected:
    """The backward field ``-v(z, 1 - s)`` of a forward field ``v``."""

    def __init__(self, field):
        self.field = field

    def __call__(self, z, s):
        return -self.field(z, 1.0 - s)


__all__ = [
    "AdamState",
    "ConstantVelocity",
    "ExactVelocity",
    "FeatureMap",
    "KernelRegression",
    "KernelVelocity",
    "Mlp",
    "TimeReflected",
    "TrainConfig",
    "VelocityField",
    "adam_step",
    "data_recovery_check",
    "distill_one_step",
    "exact_velocity_eval",
    "exact_velocity_jacobian",
    "kernel_velocity_eval",
    "knn_indices",
    "loss_and_grad",
    "mlp_forward",
    "regression_loss",
    "train_velocity",
]
