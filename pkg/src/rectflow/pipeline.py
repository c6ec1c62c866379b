"""Rectify, reflow and distill.

``rectify_once`` fits a velocity field to a coupling and simulates it to get
the rectified coupling. ``reflow`` repeats this, feeding each induced coupling
into the next round. Each round simulates a training block and a disjoint
held-out block; metrics use only the held-out block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import metrics as M
from .core import Coupling
from .distributions import DiagonalGaussian, sample
from .ode import SolverSpec, TrajectoryEnsemble, integrate
from .schedules import Linear, Schedule, interpolate
from .velocity import ExactVelocity, KernelRegression, KernelVelocity, Mlp, TrainConfig, distill_one_step, train_velocity

log = logging.getLogger(__name__)

MAX_REFLOW = 5
# time grid for crossing-measure estimates
CROSSING_TIME_SAMPLES = 32
BURGERS_PROBES = 64


@dataclass(frozen=True)
class ExactBackend:
    """Closed-form field for the independent coupling of ``source`` and ``target``."""

    source: DiagonalGaussian
    target: object
    name = "exact"


@dataclass(frozen=True)
class KnnBackend:
    h: float = 1.0
    m: int = 100
    name = "knn"


@dataclass(frozen=True)
class MlpBackend:
    cfg: TrainConfig = TrainConfig()
    name = "mlp"


def fit_velocity(backend, pairs: Coupling, schedule: Schedule, rng, callback=None):
    if isinstance(backend, ExactBackend):
        return ExactVelocity.from_distributions(backend.source, backend.target, schedule)
    if isinstance(backend, KnnBackend):
        return KernelVelocity(pairs, backend.h, min(backend.m, pairs.n), schedule)
    if isinstance(backend, MlpBackend):
        return train_velocity(pairs, schedule, backend.cfg, rng, callback=callback)
    raise TypeError(f"unknown backend {backend!r}")


def conditional_mean_field(backend, velocity, pairs: Coupling, schedule: Schedule):
    """Estimate of ``E[X1 - X0 | X_t]`` used for the crossing measure.

    The kernel flow field divides by ``1 - t`` and its error blows up on unseen
    points near ``t = 1``; a direct kernel regression of the pair directions
    stays bounded, so knn runs use that instead.
    """
    if isinstance(backend, KnnBackend):
        return KernelRegression(pairs, backend.h, min(backend.m, pairs.n), schedule)
    return velocity


@dataclass
class RectifyResult:
    velocity: object
    coupling: Coupling
    trajectories: TrajectoryEnsemble
    metrics: M.MetricsReport
    holdout_size: int = 0

    @property
    def training_pairs(self) -> Coupling:
        n = self.coupling.n - self.holdout_size
        return self.coupling.subset(slice(0, n))

    @property
    def holdout_pairs(self) -> Coupling:
        n = self.coupling.n - self.holdout_size
        return self.coupling.subset(slice(n, None))


def snapshot(velocity, traj: TrajectoryEnsemble, induced: Coupling, source_pairs: Coupling | None,
             schedule: Schedule, rng, relative_cap: int = M.RELATIVE_COST_CAP,
             crossing_field=None) -> M.MetricsReport:
    """Metrics for one round.

    ``induced`` is the simulated coupling; ``source_pairs`` are held-out pairs of
    the coupling the field was fitted on (used for V and marginal checks).
    ``crossing_field`` estimates the conditional mean direction for V and
    defaults to ``velocity``.
    """
    report = M.coupling_report(induced, relative_cap)
    if len(traj.times) >= 2:
        report.straightness = M.straightness(traj)
    if source_pairs is not None:
        if isinstance(schedule, Linear):
            field = crossing_field if crossing_field is not None else velocity
            report.crossing_v = M.crossing_v(source_pairs, field, CROSSING_TIME_SAMPLES, rng)
        for t in M.MARGINAL_TIMES:
            idx = traj.index_of(t)
            if abs(traj.times[idx] - t) < 1e-9:
                x_t, _ = interpolate(schedule, source_pairs.right, source_pairs.left, t)
                report.marginal_distances[t] = M.marginal_distance(traj.states[idx], x_t)
    probes = traj.first[:BURGERS_PROBES]
    try:
        report.burgers_residual = M.burgers_residual(velocity, probes, M.MARGINAL_TIMES)
    except ValueError:
        report.burgers_residual = None
    return report


def rectify_once(pairs: Coupling, backend, schedule: Schedule | None = None,
                 solver: SolverSpec | None = None, rng=None, start=None,
                 holdout: Coupling | None = None, holdout_start=None, callback=None) -> RectifyResult:
    """Fit a field on ``pairs`` and push ``start`` (default ``pairs.left``) through it.

    When ``holdout`` (pairs of the same input coupling, unused for fitting) is
    given, ``holdout_start`` (default ``holdout.left``) is simulated as a
    separate trailing block and all metrics are computed on it.
    """
    schedule = schedule if schedule is not None else Linear()
    solver = solver if solver is not None else SolverSpec()
    rng = rng if rng is not None else np.random.default_rng(0)
    if pairs.n < 1:
        raise ValueError("rectify_once needs a non-empty coupling")
    velocity = fit_velocity(backend, pairs, schedule, rng, callback)
    starts = pairs.left if start is None else np.asarray(start, dtype=np.float64)
    n_hold = 0
    if holdout is not None:
        hs = holdout.left if holdout_start is None else np.asarray(holdout_start, dtype=np.float64)
        starts = np.concatenate([starts, hs])
        n_hold = hs.shape[0]
    traj = integrate(velocity, starts, solver)
    induced = Coupling(traj.first, traj.last)
    held, held_traj = induced, traj
    if n_hold:
        held = induced.subset(slice(induced.n - n_hold, None))
        held_traj = TrajectoryEnsemble(traj.times, traj.states[:, -n_hold:], traj.evals_used, traj.direction)
    cond = conditional_mean_field(backend, velocity, pairs, schedule)
    report = snapshot(velocity, held_traj, held, holdout, schedule, rng, crossing_field=cond)
    return RectifyResult(velocity, induced, traj, report, n_hold)


def reflow(pairs: Coupling, K: int, backend, schedule: Schedule | None = None,
           solver: SolverSpec | None = None, rng=None, source=None, holdout: Coupling | None = None,
           max_rounds: int = MAX_REFLOW, callbacks=None) -> list[RectifyResult]:
    """Apply ``rectify_once`` ``K`` times, each round fitting the previous round's coupling.

    With ``source`` given, every round simulates fresh source draws (as many
    as the training and held-out blocks) instead of the fitted pairs. The
    closed-form backend only applies to the independent input coupling, so it
    is limited to ``K = 1``.
    """
    if not 1 <= K <= max_rounds:
        raise ValueError(f"K must lie in [1, {max_rounds}], got {K}")
    if isinstance(backend, ExactBackend) and K > 1:
        raise ValueError("the exact backend only applies to the independent coupling (K = 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    results = []
    current, held = pairs, holdout
    for k in range(K):
        start = held_start = None
        if source is not None:
            start = sample(source, current.n, rng)
            if held is not None:
                held_start = sample(source, held.n, rng)
        cb = callbacks[k] if callbacks else None
        res = rectify_once(current, backend, schedule, solver, rng, start, held, held_start, cb)
        log.info("reflow round %d: %s", k + 1, res.metrics.as_dict())
        results.append(res)
        current = res.training_pairs
        held = res.holdout_pairs if res.holdout_size else None
    return results


def distill(result: RectifyResult, cfg: TrainConfig, rng, callback=None) -> Mlp:
    """One-step model ``z + v(z, 0)`` fitted to a round's induced coupling."""
    pairs = result.training_pairs if result.holdout_size else result.coupling
    if pairs.n < 1:
        raise ValueError("nothing to distill")
    return distill_one_step(pairs, cfg, rng, callback=callback)
