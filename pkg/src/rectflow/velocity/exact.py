"""Closed-form optimal velocity for a Gaussian source and a Gaussian-mixture target.

With ``X0 ~ N(m0, diag(s0^2))`` independent of ``X1`` and ``X1`` drawn from a
mixture of diagonal Gaussians (zero-variance components are point atoms),
``X_t = alpha_t X1 + beta_t X0`` is itself a Gaussian mixture and

    v(z, t) = E[alpha_dot X1 + beta_dot X0 | X_t = z]
            = sum_k w_k(z, t) * (drift_k + coef_k * (z - mean_k))

where ``w_k`` is the posterior component probability (computed in log space)
and each bracket is the per-component linear-Gaussian regression. For atoms and
the linear schedule the bracket reduces to ``(x1_k - z) / (1 - t)``.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..core import as_cloud, check_finite
from ..distributions import DiagonalGaussian, Empirical, GaussianMixture
from ..schedules import Linear, Schedule


class ExactVelocity:
    """Exact ``v^X`` for the independent coupling of a Gaussian and a mixture.

    Parameters
    ----------
    targets : array (m, d)
        Component means (the atoms of an empirical target).
    source_stddev : float or array (d,)
        Standard deviation of the Gaussian source.
    source_mean : float or array (d,), optional
    component_stddev : float, array (m,) or (m, d), optional
        Per-component spread of the target; 0 gives point atoms.
    weights : array (m,), optional
        Mixture weights, uniform by default.
    schedule : Schedule, optional
        Interpolation curve, linear by default.
    """

    def __init__(self, targets, source_stddev=1.0, source_mean=0.0, component_stddev=0.0,
                 weights=None, schedule: Schedule | None = None):
        self.targets = as_cloud(targets, "targets")
        m, d = self.targets.shape
        self.source_stddev = np.broadcast_to(np.asarray(source_stddev, dtype=float), (d,)).copy()
        self.source_mean = np.broadcast_to(np.asarray(source_mean, dtype=float), (d,)).copy()
        if np.any(self.source_stddev <= 0):
            raise ValueError("source_stddev must be > 0")
        comp = np.asarray(component_stddev, dtype=float)
        if comp.ndim == 1 and comp.shape[0] == m:
            comp = comp[:, None]
        self.component_stddev = np.broadcast_to(comp, (m, d)).copy()
        if np.any(self.component_stddev < 0):
            raise ValueError("component_stddev must be >= 0")
        if weights is None:
            weights = np.full(m, 1.0 / m)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (m,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per target")
        self.weights = self.weights / self.weights.sum()
        self.schedule = schedule if schedule is not None else Linear()

    @classmethod
    def from_distributions(cls, source: DiagonalGaussian, target, schedule: Schedule | None = None):
        if not isinstance(source, DiagonalGaussian):
            raise TypeError("the exact field needs a DiagonalGaussian source")
        if isinstance(target, Empirical):
            return cls(target.cloud, source.stddev, source.mean, schedule=schedule)
        if isinstance(target, DiagonalGaussian):
            return cls(target.mean[None], source.stddev, source.mean, target.stddev[None], schedule=schedule)
        if isinstance(target, GaussianMixture):
            return cls(target.means, source.stddev, source.mean, target.stddevs, target.weights, schedule)
        raise TypeError(f"no closed-form field for target {type(target).__name__}")

    @property
    def dim(self) -> int:
        return self.targets.shape[1]

    def _params(self, t):
        t = float(t)
        a, b, ad, bd = self.schedule.coefficients(t)
        s2 = self.component_stddev**2
        q2 = self.source_stddev**2
        var = a * a * s2 + b * b * q2[None, :]
        if np.any(var <= 0) or not np.all(np.isfinite(var)):
            raise ValueError(f"exact velocity undefined at t={t} (degenerate X_t)")
        mean = a * self.targets + b * self.source_mean[None, :]
        coef = (ad * a * s2 + bd * b * q2[None, :]) / var
        drift = ad * self.targets + bd * self.source_mean[None, :]
        const = np.log(self.weights) - 0.5 * np.sum(np.log(var), axis=1)
        return mean, 1.0 / var, coef, drift, const

    def __call__(self, z, t):
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zz = np.ascontiguousarray(z[None] if single else z)
        if zz.shape[1] != self.dim:
            raise ValueError(f"z has dimension {zz.shape[1]}, field has {self.dim}")
        out = kernels.mixture_velocity(zz, *self._params(t))
        check_finite(out, "exact velocity")
        return out[0] if single else out

    def weights_at(self, z, t):
        """Posterior component weights, shape ``(n, m)``."""
        zz = np.atleast_2d(np.asarray(z, dtype=np.float64))
        mean, inv_var, _, _, const = self._params(t)
        diff = zz[:, None, :] - mean[None]
        logw = const[None] - 0.5 * np.sum(diff * diff * inv_var[None], axis=2)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        return w / w.sum(axis=1, keepdims=True)

    def jacobian(self, z, t):
        """Analytic ``d x d`` Jacobian ``dv/dz`` at a single point."""
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        mean, inv_var, coef, drift, _ = self._params(t)
        w = self.weights_at(z, t)[0]
        diff = z[None, :] - mean
        g = drift + coef * diff
        grad_log = -diff * inv_var
        centred = grad_log - w @ grad_log
        return np.diag(w @ coef) + np.einsum("k,kc,ke->ce", w, g, centred)

    def sample_source(self, n, rng):
        return self.source_mean + self.source_stddev * rng.standard_normal((n, self.dim))


def exact_velocity_eval(v: ExactVelocity, z, t):
    if not 0.0 <= t < 1.0:
        raise ValueError("exact velocity is defined for t in [0, 1)")
    return v(z, t)


def exact_velocity_jacobian(v: ExactVelocity, z, t):
    if not 0.0 <= t < 1.0:
        raise ValueError("exact velocity is defined for t in [0, 1)")
    return v.jacobian(z, t)


def data_recovery_check(v: ExactVelocity, n: int, steps: int, rng) -> float:
    """Max distance from simulated endpoints to the nearest target atom.

    Euler with uniform steps up to ``t = 1 - 1/steps``, then the closing step
    ``z + (1 - t) v(z, t)``, which is exact along a locally dominant line.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not isinstance(v.schedule, Linear):
        raise ValueError("data recovery is defined for the linear schedule")
    z = v.sample_source(n, rng)
    for k in range(steps - 1):
        z = z + v(z, k / steps) / steps
    t = (steps - 1) / steps
    z = z + (1.0 - t) * v(z, t)
    return float(kernels.pairwise_distances(z, v.targets).min(axis=1).max())
