"""Interpolation schedules ``X_t = alpha_t X1 + beta_t X0`` with exact derivatives.

Every schedule evaluates ``(alpha, beta, alpha_dot, beta_dot)`` in closed form
and accepts scalar or array ``t`` in ``[0, 1]``. For the diffusion-derived
families (VP, sub-VP, VE) the ``X0`` slot holds standard Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# opt-in clamp margin for operations that need beta_t > 0
CLAMP_EPS = 1e-5


def _check_t(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


class Schedule:
    """Base class; subclasses implement ``_coefficients`` on validated ``t``."""

    name = "schedule"

    def __call__(self, t):
        return self.coefficients(t)

    def coefficients(self, t):
        """Return ``(alpha, beta, alpha_dot, beta_dot)`` at ``t``."""
        t = _check_t(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._coefficients(t)
        if t.ndim == 0:
            return tuple(float(v) for v in out)
        return tuple(np.broadcast_to(v, t.shape).astype(np.float64) for v in out)

    def _coefficients(self, t):
        raise NotImplementedError

    def alpha(self, t):
        return self.coefficients(t)[0]

    def beta(self, t):
        return self.coefficients(t)[1]

    def to_config(self) -> dict:
        return {"name": self.name}


@dataclass(frozen=True)
class Linear(Schedule):
    name = "linear"

    def _coefficients(self, t):
        return t, 1.0 - t, np.ones_like(t), -np.ones_like(t)


def _vp_alpha(t, a, b):
    s = 1.0 - t
    alpha = np.exp(-0.25 * a * s * s - 0.5 * b * s)
    return alpha, alpha * (0.5 * a * s + 0.5 * b)


@dataclass(frozen=True)
class VP(Schedule):
    a: float = 19.9
    b: float = 0.1
    name = "vp"

    def _coefficients(self, t):
        alpha, alpha_dot = _vp_alpha(t, self.a, self.b)
        # 1 - alpha^2 via expm1 keeps beta accurate near t = 1
        beta = np.sqrt(-np.expm1(2.0 * np.log(alpha)))
        return alpha, beta, alpha_dot, -alpha * alpha_dot / beta

    def to_config(self):
        return {"name": self.name, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class SubVP(Schedule):
    a: float = 19.9
    b: float = 0.1
    name = "sub-vp"

    def _coefficients(self, t):
        alpha, alpha_dot = _vp_alpha(t, self.a, self.b)
        beta = -np.expm1(2.0 * np.log(alpha))
        return alpha, beta, alpha_dot, -2.0 * alpha * alpha_dot

    def to_config(self):
        return {"name": self.name, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class VE(Schedule):
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    name = "ve"

    def __post_init__(self):
        if not self.sigma_max > self.sigma_min > 0:
            raise ValueError("VE needs sigma_max > sigma_min > 0")

    def _coefficients(self, t):
        log_r = np.log(self.sigma_max / self.sigma_min)
        grow = np.exp(2.0 * (1.0 - t) * log_r)
        root = np.sqrt(np.expm1(2.0 * (1.0 - t) * log_r))
        beta = self.sigma_min * root
        beta_dot = -self.sigma_min * log_r * grow / root
        return np.ones_like(t), beta, np.zeros_like(t), beta_dot

    def to_config(self):
        return {"name": self.name, "sigma_min": self.sigma_min, "sigma_max": self.sigma_max}


@dataclass(frozen=True)
class ConstSpeedVP(Schedule):
    """VP-type curve with the exponential alpha replaced by ``alpha_t = t``."""

    name = "const-speed-vp"

    def _coefficients(self, t):
        beta = np.sqrt((1.0 - t) * (1.0 + t))
        return t, beta, np.ones_like(t), -t / beta


@dataclass(frozen=True)
class StraightReparam(Schedule):
    """Straight paths ``beta_t = 1 - alpha_t`` travelled at the speed of ``base.alpha``."""

    base: Schedule = Linear()
    name = "straight"

    def _coefficients(self, t):
        alpha, _, alpha_dot, _ = self.base._coefficients(t)
        return alpha, 1.0 - alpha, alpha_dot, -alpha_dot

    def to_config(self):
        return {"name": self.name, "base": self.base.to_config()}


_REGISTRY = {
    "linear": Linear,
    "vp": VP,
    "sub-vp": SubVP,
    "ve": VE,
    "const-speed-vp": ConstSpeedVP,
}


def from_config(cfg) -> Schedule:
    """Build a schedule from a name or a mapping ``{"name": ..., **params}``."""
    if isinstance(cfg, str):
        cfg = {"name": cfg}
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    if name == "straight":
        return StraightReparam(from_config(cfg.pop("base", "vp")))
    if name not in _REGISTRY:
        raise ValueError(f"unknown schedule {name!r}; choose from {sorted(_REGISTRY) + ['straight']}")
    return _REGISTRY[name](**cfg)


def schedule_eval(s: Schedule, t):
    return s.coefficients(t)


def _time_column(t):
    t = np.asarray(t, dtype=np.float64)
    return t[:, None] if t.ndim == 1 else t


def interpolate(s: Schedule, x1, x0, t):
    """Return ``(x_t, x_dot_t)`` for paired endpoints; ``t`` scalar or one per row."""
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x1.shape != x0.shape:
        raise ValueError(f"endpoint shapes differ: {x1.shape} vs {x0.shape}")
    a, b, ad, bd = (_time_column(v) for v in s.coefficients(t))
    return a * x1 + b * x0, ad * x1 + bd * x0


@dataclass(frozen=True)
class EtaSigma:
    """Drift rate ``eta_t`` and squared diffusion ``sigma_t^2`` matching a schedule."""

    schedule: Schedule

    def _parts(self, t):
        a, b, ad, bd = self.schedule.coefficients(t)
        a, b = np.asarray(a), np.asarray(b)
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError(f"eta/sigma undefined where alpha or beta vanish (t={t})")
        return a, b, ad, bd

    def eta(self, t):
        a, _, ad, _ = self._parts(t)
        return -ad / a

    def sigma_sq(self, t):
        a, b, ad, bd = self._parts(t)
        return 2.0 * b * b * (ad / a - bd / b)


def derive_eta_sigma(s: Schedule) -> EtaSigma:
    probe = np.linspace(0.0, 1.0, 1001)[1:-1]
    a, b, _, _ = s.coefficients(probe)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError(f"schedule {s.name!r} has alpha or beta vanishing inside (0, 1)")
    return EtaSigma(s)


def pfode_target(s: Schedule, x1, xi, t, clamp: bool = False):
    """Probability-flow regression target built from ``eta_t`` and ``sigma_t^2``.

    Computes ``-eta_t x_t - sigma_t^2 / (2 beta_t) xi`` with
    ``x_t = alpha_t x1 + beta_t xi``. Raises at ``beta_t = 0`` unless ``clamp``
    moves ``t`` into ``[CLAMP_EPS, 1 - CLAMP_EPS]``.
    """
    t = _check_t(t)
    if clamp:
        t = np.clip(t, CLAMP_EPS, 1.0 - CLAMP_EPS)
    elif np.any(t <= 0.0) or np.any(t >= 1.0):
        raise ValueError("pfode_target needs t in the open interval (0, 1)")
    x1 = np.asarray(x1, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    es = derive_eta_sigma(s)
    a, b, _, _ = s.coefficients(t)
    if np.any(np.asarray(b) <= 0):
        raise ValueError("pfode_target is singular where beta_t = 0")
    a, b = _time_column(a), _time_column(b)
    eta = _time_column(es.eta(t))
    sig2 = _time_column(es.sigma_sq(t))
    x_t = a * x1 + b * xi
    return -eta * x_t - sig2 / (2.0 * b) * xi

