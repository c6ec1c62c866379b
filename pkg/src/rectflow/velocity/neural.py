"""Small MLP velocity model with hand-written backprop and Adam.

The network maps the concatenation ``[z, t]`` to a velocity in ``R^d``.
Parameters are stored as a flat list ``[W0, b0, W1, b1, ...]`` with
``W_l`` of shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..core import Coupling, DivergenceError
from ..schedules import Linear, Schedule, interpolate

log = logging.getLogger(__name__)

# loss above this is treated as divergence
DIVERGENCE_LIMIT = 1e8


def _tanh(x):
    y = np.tanh(x)
    return y, 1.0 - y * y


def _softplus(x):
    # smooth ReLU; derivative is the logistic function
    return np.logaddexp(0.0, x), 0.5 * (1.0 + np.tanh(0.5 * x))


ACTIVATIONS = {"tanh": _tanh, "smooth-relu": _softplus}


@dataclass(frozen=True, eq=False)
class Mlp:
    params: tuple
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.params) % 2 or not self.params:
            raise ValueError("params must alternate weight and bias arrays")
        for w, b in zip(self.params[::2], self.params[1::2]):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("weight/bias shapes do not chain")
        for w_prev, w_next in zip(self.params[0:-2:2], self.params[2::2]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise ValueError("layer widths do not chain")

    @classmethod
    def init(cls, dim: int, hidden=(64, 64), rng=None, activation: str = "tanh") -> "Mlp":
        """Glorot-normal weights, zero biases."""
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = [dim + 1, *hidden, dim]
        params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            params += [scale * rng.standard_normal((fan_in, fan_out)), np.zeros(fan_out)]
        return cls(tuple(params), activation)

    @property
    def dim(self) -> int:
        return self.params[-1].shape[0]

    @property
    def widths(self) -> list[int]:
        return [self.params[0].shape[0]] + [w.shape[1] for w in self.params[::2]]

    def _inputs(self, z, t):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (z.shape[0],))
        return np.concatenate([z, t[:, None]], axis=1)

    def forward(self, z, t, keep=False):
        act = ACTIVATIONS[self.activation]
        h = self._inputs(z, t)
        cache = [h]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            pre = h @ w + b
            if layer == n_layers - 1:
                h = pre
            else:
                h, dh = act(pre)
                cache.append((h, dh))
        return (h, cache) if keep else h

    def backward(self, cache, grad_out):
        """Parameter gradients given ``dL/d(output)`` and a forward cache."""
        grads = [None] * len(self.params)
        g = grad_out
        n_layers = len(self.params) // 2
        for layer in range(n_layers - 1, -1, -1):
            h_in = cache[0] if layer == 0 else cache[layer][0]
            grads[2 * layer] = h_in.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                g = (g @ self.params[2 * layer].T) * cache[layer][1]
        return grads

    def __call__(self, z, t):
        z = np.asarray(z, dtype=np.float64)
        out = self.forward(z, t)
        return out[0] if z.ndim == 1 else out

    def one_step(self, z):
        """Distilled one-step map ``z + v(z, 0)``."""
        return np.asarray(z, dtype=np.float64) + self(z, 0.0)

    def with_params(self, params) -> "Mlp":
        return Mlp(tuple(params), self.activation)


def mlp_forward(m: Mlp, z, t):
    return m(z, t)


@dataclass(frozen=True)
class FeatureMap:
    """Linear feature map ``H`` (k x d); the residual is scored as ``H r``."""

    matrix: np.ndarray

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        if not np.all(np.isfinite(h)):
            raise ValueError("feature map must be finite")
        object.__setattr__(self, "matrix", h)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_penalty: float = 0.0
    # w_t in the time-weighted objective; None means w_t = 1
    time_weight: Callable | None = None
    # "uniform" on [0, 1), "grid" on {0, 1/k, ..., (k-1)/k}, or "zero"
    time_sampling: str = "uniform"
    grid_k: int = 1
    ema_decay: float | None = None
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    log_every: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if self.time_sampling not in {"uniform", "grid", "zero"}:
            raise ValueError(f"unknown time_sampling {self.time_sampling!r}")
        if self.ema_decay is not None and not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")


def regression_loss(v, pairs: Coupling, times, schedule: Schedule | None = None,
                    feature: FeatureMap | None = None, time_weight=None) -> float:
    """Mean weighted squared residual ``w_t |H (x_dot_t - v(x_t, t))|^2`` for any field ``v``."""
    schedule = schedule if schedule is not None else Linear()
    times = np.asarray(times, dtype=np.float64)
    x_t, target = interpolate(schedule, pairs.right, pairs.left, times)
    pred = np.stack([v(x_t[i], times[i]) for i in range(len(times))])
    r = target - pred
    if feature is not None:
        r = r @ feature.matrix.T
    w = np.ones_like(times) if time_weight is None else np.asarray(time_weight(times), dtype=float)
    return float(np.mean(w * np.sum(r * r, axis=1)))


def loss_and_grad(m: Mlp, batch: Coupling, times, cfg: TrainConfig,
                  feature: FeatureMap | None = None, schedule: Schedule | None = None):
    """Objective value and exact parameter gradients.

    ``loss = mean_i w(t_i) |H r_i|^2 + l2 * sum |theta|^2`` with residual
    ``r_i = x_dot(t_i) - v(x_t_i, t_i)``; ``H`` is the identity when no
    feature map is given.
    """
    schedule = schedule if schedule is not None else Linear()
    times = np.asarray(times, dtype=np.float64)
    if times.shape != (batch.n,):
        raise ValueError("need one time per pair")
    x_t, target = interpolate(schedule, batch.right, batch.left, times)
    pred, cache = m.forward(x_t, times, keep=True)
    r = target - pred
    w = np.ones(batch.n) if cfg.time_weight is None else np.asarray(cfg.time_weight(times), dtype=float)
    if feature is not None:
        hr = r @ feature.matrix.T
        per = np.sum(hr * hr, axis=1)
        grad_pred = -2.0 * (w[:, None] * hr) @ feature.matrix / batch.n
    else:
        per = np.sum(r * r, axis=1)
        grad_pred = -2.0 * w[:, None] * r / batch.n
    loss = float(np.mean(w * per))
    grads = m.backward(cache, grad_pred)
    if cfg.l2_penalty > 0:
        loss += cfg.l2_penalty * float(sum(np.sum(p * p) for p in m.params))
        grads = [g + 2.0 * cfg.l2_penalty * p for g, p in zip(grads, m.params)]
    return loss, grads


@dataclass
class AdamState:
    first: list
    second: list
    step: int = 0

    @classmethod
    def zeros_like(cls, m: Mlp) -> "AdamState":
        return cls([np.zeros_like(p) for p in m.params], [np.zeros_like(p) for p in m.params])


def adam_step(m: Mlp, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    step = state.step + 1
    first = [cfg.beta1 * f + (1 - cfg.beta1) * g for f, g in zip(state.first, grads)]
    second = [cfg.beta2 * s + (1 - cfg.beta2) * g * g for s, g in zip(state.second, grads)]
    c1 = 1 - cfg.beta1**step
    c2 = 1 - cfg.beta2**step
    params = [
        p - cfg.learning_rate * (f / c1) / (np.sqrt(s / c2) + cfg.eps)
        for p, f, s in zip(m.params, first, second)
    ]
    return m.with_params(params), AdamState(first, second, step)


def _sample_times(cfg: TrainConfig, n, rng):
    if cfg.time_sampling == "zero":
        return np.zeros(n)
    if cfg.time_sampling == "grid":
        return rng.integers(0, cfg.grid_k, size=n) / cfg.grid_k
    return rng.random(n)


def train_velocity(pairs: Coupling, schedule: Schedule | None, cfg: TrainConfig, rng,
                   feature: FeatureMap | None = None, callback=None, init: Mlp | None = None) -> Mlp:
    """Minibatch Adam on the rectified-flow regression objective.

    Pairs are resampled with replacement each iteration and every example gets
    its own time. ``callback(iteration, loss)`` fires every ``cfg.log_every``
    iterations and on the last one. Returns the EMA weights when
    ``cfg.ema_decay`` is set.
    """
    schedule = schedule if schedule is not None else Linear()
    model = init if init is not None else Mlp.init(pairs.d, cfg.hidden, rng, cfg.activation)
    state = AdamState.zeros_like(model)
    ema = list(model.params) if cfg.ema_decay is not None else None
    for it in range(cfg.iterations):
        batch = pairs.resample(cfg.batch_size, rng)
        times = _sample_times(cfg, cfg.batch_size, rng)
        loss, grads = loss_and_grad(model, batch, times, cfg, feature, schedule)
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise DivergenceError(f"training diverged at iteration {it} (loss={loss})")
        model, state = adam_step(model, grads, state, cfg)
        if ema is not None:
            d = cfg.ema_decay
            ema = [d * e + (1 - d) * p for e, p in zip(ema, model.params)]
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            log.debug("iteration %d loss %.6g", it, loss)
            if callback is not None:
                callback(it, loss)
    return model.with_params(ema) if ema is not None else model


def distill_one_step(flow_pairs: Coupling, cfg: TrainConfig, rng,
                     feature: FeatureMap | None = None, callback=None) -> Mlp:
    """Fit ``v(., 0)`` so that ``z0 + v(z0, 0)`` reproduces the coupling's ``z1``."""
    return train_velocity(flow_pairs, Linear(), replace(cfg, time_sampling="zero"), rng,
                          feature=feature, callback=callback)
