"""Nadaraya-Watson / k-nearest-neighbour estimate of the rectified velocity.

For training pairs ``(x0_i, x1_i)`` and a query ``z`` at time ``t``, the
``m`` interpolants ``x_t_i`` closest to ``z`` vote with Gaussian RBF weights
``exp(-|x_t_i - z|^2 / 2h^2)`` normalised over that neighbour set. Each vote is
the path direction through ``z`` that ends at ``x1_i``; under the linear
schedule that is ``(x1_i - z) / (1 - t)``, so one exact step from ``z`` lands
in the convex hull of the neighbours' targets.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..core import Coupling, as_cloud, check_finite
from ..schedules import Linear, Schedule

DEFAULT_BANDWIDTH = 1.0
DEFAULT_NEIGHBOURS = 100


class KernelVelocity:
    def __init__(self, pairs: Coupling, h: float = DEFAULT_BANDWIDTH, m: int = DEFAULT_NEIGHBOURS,
                 schedule: Schedule | None = None):
        if not h > 0:
            raise ValueError(f"bandwidth h must be > 0, got {h}")
        if not 1 <= m <= pairs.n:
            raise ValueError(f"need 1 <= m <= {pairs.n} neighbours, got {m}")
        self.pairs = pairs
        self.h = float(h)
        self.m = int(m)
        self.schedule = schedule if schedule is not None else Linear()

    @property
    def dim(self) -> int:
        return self.pairs.d

    def _average(self, z, t, values_of):
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zz = np.ascontiguousarray(z[None] if single else z)
        coeffs = self.schedule.coefficients(float(t))
        a, b = coeffs[0], coeffs[1]
        xt = np.ascontiguousarray(a * self.pairs.right + b * self.pairs.left)
        avg = kernels.knn_average(zz, xt, np.ascontiguousarray(values_of(coeffs)), self.m, self.h)
        return zz, avg, coeffs, single

    def __call__(self, z, t):
        zz, avg, (a, b, ad, bd), single = self._average(z, t, lambda c: self.pairs.right)
        if not b > 0:
            raise ValueError(f"kernel velocity undefined at t={t} (beta_t = 0)")
        # each vote a_dot x1 + b_dot (z - a x1) / b is affine in x1, so average x1 first
        out = (ad - bd * a / b) * avg + (bd / b) * zz
        check_finite(out, "kernel velocity")
        return out[0] if single else out


class KernelRegression(KernelVelocity):
    """Kernel estimate of ``E[X_dot_t | X_t = z]`` that averages the pairs' own path velocities.

    Unlike :class:`KernelVelocity` it stays bounded as ``t -> 1``, which makes
    it the better plug-in for the crossing measure on held-out pairs.
    """

    def __call__(self, z, t):
        def velocities(c):
            return c[2] * self.pairs.right + c[3] * self.pairs.left

        zz, avg, _, single = self._average(z, t, velocities)
        return avg[0] if single else avg


def kernel_velocity_eval(v: KernelVelocity, z, t):
    if not 0.0 <= t < 1.0:
        raise ValueError("kernel velocity is defined for t in [0, 1)")
    return v(z, t)


def knn_indices(cloud, z, m: int) -> np.ndarray:
    """Indices of the ``m`` rows nearest to ``z``, sorted by distance then index."""
    cloud = as_cloud(cloud)
    if not 1 <= m <= cloud.shape[0]:
        raise ValueError(f"m={m} outside [1, {cloud.shape[0]}]")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    return kernels.knn_indices(cloud, z, m)
