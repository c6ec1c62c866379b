"""Ensemble ODE integration of velocity fields on ``t in [0, 1]``.

Two solvers: fixed-step explicit Euler on the grid ``{0, 1/N, ..., (N-1)/N}``
and adaptive Dormand-Prince 5(4). All particles share one step sequence, so a
trajectory ensemble is a single ``(T, n, d)`` array on a common time grid.
Backward runs integrate the reflected field ``-v(x, 1 - s)`` and are reported
in the original time coordinate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import SolverError, as_cloud

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class SolverSpec:
    method: str = "euler"
    steps: int = 100
    rtol: float = 1e-5
    atol: float = 1e-5
    max_evals: int = 100_000
    direction: str = "forward"
    record_every: int = 1

    def __post_init__(self):
        if self.method not in {"euler", "rk45"}:
            raise ValueError(f"unknown solver {self.method!r}")
        if self.method == "euler" and self.steps < 1:
            raise ValueError("Euler needs steps >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be > 0")
        if self.direction not in {"forward", "backward"}:
            raise ValueError(f"direction must be forward or backward, not {self.direction!r}")
        if self.record_every < 0:
            raise ValueError("record_every must be >= 0")

    def reversed(self) -> "SolverSpec":
        other = "backward" if self.direction == "forward" else "forward"
        return SolverSpec(self.method, self.steps, self.rtol, self.atol, self.max_evals, other,
                          self.record_every)


@dataclass(frozen=True)
class TrajectoryEnsemble:
    times: np.ndarray
    states: np.ndarray  # (T, n, d)
    evals_used: int
    direction: str = "forward"

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def first(self) -> np.ndarray:
        return self.states[0]

    @property
    def last(self) -> np.ndarray:
        return self.states[-1]

    @property
    def result(self) -> np.ndarray:
        """State where the integration ended (t=1 forward, t=0 backward)."""
        return self.last if self.direction == "forward" else self.first

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> np.ndarray:
        """Recorded state nearest to time ``t``."""
        return self.states[self.index_of(t)]

    def to_csv(self, path, header_comment: str | None = None):
        """Long format: particle_id, step_index, t, x_0 ... x_{d-1}."""
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["particle_id", "step_index", "t"] + [f"x_{c}" for c in range(self.d)])
            for i in range(self.n):
                for j, t in enumerate(self.times):
                    writer.writerow([i, j, repr(float(t))] + [repr(float(x)) for x in self.states[j, i]])


class _Recorder:
    def __init__(self, every):
        self.every = every
        self.times, self.states = [], []

    def __call__(self, k, t, z, final=False):
        if final or k == 0 or (self.every and k % self.every == 0):
            if self.times and self.times[-1] == t:
                return
            self.times.append(t)
            self.states.append(z.copy())


def _finite(z, t):
    if not np.all(np.isfinite(z)):
        raise SolverError(f"non-finite state at t={t}")
    return z


def _euler(field, z, steps, rec):
    for k in range(steps):
        t = k / steps
        rec(k, t, z)
        z = _finite(z + field(z, t) / steps, t)
    rec(steps, 1.0, z, final=True)
    return steps


def _rms_max(err, scale):
    # per-particle RMS over coordinates, worst particle drives the step
    return float(np.max(np.sqrt(np.mean((err / scale) ** 2, axis=1))))


def _initial_step(field, z, f0, rtol, atol):
    scale = atol + rtol * np.abs(z)
    d0 = _rms_max(z, scale)
    d1 = _rms_max(f0, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, 1.0)
    f1 = field(z + h0 * f0, h0)
    d2 = _rms_max(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, 1.0), 1


def _dopri(field, z, spec, rec):
    t = 0.0
    f = field(z, t)
    evals = 1
    h, used = _initial_step(field, z, f, spec.rtol, spec.atol)
    evals += used
    k_acc = 0
    rec(0, t, z)
    while t < 1.0:
        h = min(h, 1.0 - t)
        if h < 1e-14:
            raise SolverError(f"step size underflow at t={t}")
        if evals + 6 > spec.max_evals:
            raise SolverError(f"RK45 exceeded max_evals={spec.max_evals} at t={t}")
        ks = [f]
        for i in range(1, 7):
            zi = z + h * sum(a * k for a, k in zip(_A[i], ks))
            ks.append(field(zi, min(t + _C[i] * h, 1.0)))
        evals += 6
        z_new = z + h * sum(b * k for b, k in zip(_B5[:6], ks[:6]))
        err = h * sum(e * k for e, k in zip(_E, ks))
        scale = spec.atol + spec.rtol * np.maximum(np.abs(z), np.abs(z_new))
        norm = _rms_max(err, scale)
        if norm <= 1.0 and np.all(np.isfinite(z_new)):
            t = 1.0 if 1.0 - (t + h) < 1e-14 else t + h
            z, f = z_new, ks[6]
            k_acc += 1
            rec(k_acc, t, z, final=t >= 1.0)
            factor = _MAX_FACTOR if norm == 0 else min(_MAX_FACTOR, _SAFETY * norm ** (-1 / 5))
        else:
            factor = max(_MIN_FACTOR, _SAFETY * norm ** (-1 / 5)) if np.isfinite(norm) else _MIN_FACTOR
        h *= factor
    return evals


def integrate(v, start, spec: SolverSpec | None = None) -> TrajectoryEnsemble:
    """Simulate ``dz = v(z, t) dt`` for every row of ``start``.

    Forward runs start at ``t = 0``; backward runs start at ``t = 1`` and
    solve ``dx = -v(x, 1 - s) ds``. ``evals_used`` counts field evaluations per
    particle (equal to ``N`` for Euler).
    """
    spec = spec if spec is not None else SolverSpec()
    z = as_cloud(start, "start").copy()
    field = v if spec.direction == "forward" else (lambda x, s: -v(x, 1.0 - s))
    rec = _Recorder(spec.record_every)
    if spec.method == "euler":
        evals = _euler(field, z, spec.steps, rec)
    else:
        evals = _dopri(field, z, spec, rec)
    times = np.array(rec.times)
    states = np.stack(rec.states)
    if spec.direction == "backward":
        times = (1.0 - times)[::-1]
        states = states[::-1]
    return TrajectoryEnsemble(times, np.ascontiguousarray(states), evals, spec.direction)


def roundtrip(v, start, spec: SolverSpec | None = None) -> float:
    """Integrate forward then backward; max per-particle reconstruction error."""
    spec = spec if spec is not None else SolverSpec()
    start = as_cloud(start, "start")
    fwd = integrate(v, start, SolverSpec(spec.method, spec.steps, spec.rtol, spec.atol, spec.max_evals,
                                         "forward", 0))
    back = integrate(v, fwd.result, SolverSpec(spec.method, spec.steps, spec.rtol, spec.atol,
                                               spec.max_evals, "backward", 0))
    return float(np.max(np.linalg.norm(back.result - start, axis=1)))
