"""Evaluation of flows and couplings.

Straightness and crossing measures, convex transport costs, exact discrete
optimal assignment, energy-distance two-sample testing, a finite-difference
Burgers residual and the 1-D monotonicity count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import Coupling, as_cloud
from .ode import TrajectoryEnsemble

RELATIVE_COST_CAP = 2048


@dataclass(frozen=True)
class ConvexCost:
    """``c(u) = |u|^p`` on difference vectors, ``p >= 1``."""

    p: float = 2.0
    name: str = "cost_l2sq"

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("convex cost needs p >= 1")

    def __call__(self, diff):
        return np.linalg.norm(np.atleast_2d(diff), axis=1) ** self.p


L1_NORM = ConvexCost(1.0, "cost_l1")
L2_SQ = ConvexCost(2.0, "cost_l2sq")
P15 = ConvexCost(1.5, "cost_p15")
STANDARD_COSTS = (L2_SQ, L1_NORM, P15)


def straightness(traj: TrajectoryEnsemble) -> float:
    """Riemann sum of ``E |(Z1 - Z0) - dZ/dt|^2`` over the recorded intervals."""
    if len(traj.times) < 2:
        raise ValueError("straightness needs at least two recorded times")
    chord = traj.last - traj.first
    dt = np.diff(traj.times)
    vel = np.diff(traj.states, axis=0) / dt[:, None, None]
    dev = np.sum((vel - chord[None]) ** 2, axis=2).mean(axis=1)
    return float(np.sum(dt * dev))


def crossing_v_samples(pairs: Coupling, v, time_samples: int, rng) -> np.ndarray:
    """Per-pair estimates of ``int |X1 - X0 - v(X_t, t)|^2 dt`` on stratified times."""
    if time_samples < 1:
        raise ValueError("time_samples must be >= 1")
    direction = pairs.right - pairs.left
    acc = np.zeros(pairs.n)
    times = (np.arange(time_samples) + rng.random(time_samples)) / time_samples
    for t in times:
        x_t = t * pairs.right + (1.0 - t) * pairs.left
        acc += np.sum((direction - v(x_t, t)) ** 2, axis=1)
    return acc / time_samples


def crossing_v(pairs: Coupling, velocity_on_interp, time_samples: int, rng) -> float:
    """Monte-Carlo estimate of the crossing measure ``V`` of a coupling.

    ``velocity_on_interp`` should estimate ``E[X1 - X0 | X_t]`` for this
    coupling; zero means the interpolation paths never intersect.
    """
    return float(np.mean(crossing_v_samples(pairs, velocity_on_interp, time_samples, rng)))


def transport_cost(pairs: Coupling, c: ConvexCost = L2_SQ) -> float:
    return float(np.mean(c(pairs.right - pairs.left)))


def transport_cost_se(pairs: Coupling, c: ConvexCost = L2_SQ) -> tuple[float, float]:
    vals = c(pairs.right - pairs.left)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0


def hungarian_assignment(cost_matrix) -> np.ndarray:
    """Column assigned to each row in a minimum-cost perfect matching."""
    cost = np.asarray(cost_matrix, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] == 0:
        raise ValueError(f"cost matrix must be square and non-empty, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    return kernels.linear_assignment(np.ascontiguousarray(cost))


def assignment_cost(cost_matrix, perm) -> float:
    cost = np.asarray(cost_matrix, dtype=np.float64)
    return float(cost[np.arange(len(perm)), perm].sum())


def squared_distance_matrix(a, b) -> np.ndarray:
    return kernels.pairwise_distances(np.ascontiguousarray(a), np.ascontiguousarray(b)) ** 2


def relative_l2_cost(coupling: Coupling, cap: int = RELATIVE_COST_CAP) -> float:
    """Mean squared displacement of the coupling minus that of the optimal matching."""
    if coupling.n > cap:
        raise ValueError(f"relative_l2_cost limited to n <= {cap} (O(n^3) assignment); got {coupling.n}")
    cost = squared_distance_matrix(coupling.left, coupling.right)
    perm = hungarian_assignment(cost)
    coupled = float(np.mean(np.diag(cost)))
    return coupled - assignment_cost(cost, perm) / coupling.n


def _energy_from_matrix(dist, n):
    m = dist.shape[0] - n
    s_aa = dist[:n, :n].sum()
    s_bb = dist[n:, n:].sum()
    s_ab = dist[:n, n:].sum()
    return 2.0 * s_ab / (n * m) - s_aa / n**2 - s_bb / m**2


def marginal_distance(a, b) -> float:
    """Energy distance (V-statistic form) between two samples; 0 for equal samples."""
    a, b = as_cloud(a, "a"), as_cloud(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples differ in dimension")
    dist = kernels.pairwise_distances(np.concatenate([a, b]), np.concatenate([a, b]))
    return float(max(_energy_from_matrix(dist, a.shape[0]), 0.0))


@dataclass(frozen=True)
class EnergyTest:
    statistic: float
    p_value: float
    threshold: float  # null quantile at the requested level

    def rejects(self) -> bool:
        return self.statistic > self.threshold


def energy_test(a, b, rng, n_perm: int = 199, level: float = 0.95) -> EnergyTest:
    """Permutation test of equal distributions using the energy distance.

    Relabellings reuse one distance matrix: for a 0/1 label vector ``s`` the
    within/between sums are ``s'Ds`` and ``s'D1 - s'Ds``.
    """
    a, b = as_cloud(a, "a"), as_cloud(b, "b")
    n, m = a.shape[0], b.shape[0]
    pooled = np.concatenate([a, b])
    dist = kernels.pairwise_distances(pooled, pooled)
    row = dist.sum(axis=1)
    total = row.sum()

    def stat(labels):
        s_aa = labels @ dist @ labels
        s_ab = labels @ row - s_aa
        s_bb = total - 2.0 * s_ab - s_aa
        return 2.0 * s_ab / (n * m) - s_aa / n**2 - s_bb / m**2

    base = np.zeros(n + m)
    base[:n] = 1.0
    observed = stat(base)
    null = np.array([stat(rng.permutation(base)) for _ in range(n_perm)])
    p_value = (1 + np.sum(null >= observed)) / (n_perm + 1)
    return EnergyTest(float(max(observed, 0.0)), float(p_value), float(np.quantile(null, level)))


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic for 1-D samples."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def burgers_residual(v, probes, times, step: float = 1e-4) -> float:
    """Mean ``|d_t v + (d_z v) v|`` over probes and times, by central differences."""
    probes = as_cloud(probes, "probes")
    n, d = probes.shape
    total = 0.0
    for t in np.atleast_1d(times):
        t = float(t)
        if not step <= t <= 1.0 - step:
            raise ValueError(f"time {t} too close to the boundary for step {step}")
        vel = v(probes, t)
        dvdt = (v(probes, t + step) - v(probes, t - step)) / (2 * step)
        jv = np.zeros((n, d))
        for c in range(d):
            shift = np.zeros(d)
            shift[c] = step
            dcol = (v(probes + shift, t) - v(probes - shift, t)) / (2 * step)
            jv += dcol * vel[:, c:c + 1]
        total += float(np.mean(np.linalg.norm(dvdt + jv, axis=1)))
    return total / len(np.atleast_1d(times))


def monotone_violations(coupling: Coupling) -> int:
    """Count pairs with ``left_i < left_j`` but ``right_i > right_j`` (1-D only)."""
    if coupling.d != 1:
        raise ValueError("monotone_violations is defined for d = 1")
    left, right = coupling.left[:, 0], coupling.right[:, 0]
    order = np.lexsort((right, left))
    return int(kernels.count_inversions(np.ascontiguousarray(right[order])))


MARGINAL_TIMES = (0.25, 0.5, 0.75)
_MARGINAL_KEYS = {0.25: "marginal_t025", 0.5: "marginal_t05", 0.75: "marginal_t075"}


@dataclass
class MetricsReport:
    straightness: float | None = None
    crossing_v: float | None = None
    transport_costs: dict = field(default_factory=dict)
    relative_l2_cost: float | None = None
    marginal_distances: dict = field(default_factory=dict)
    burgers_residual: float | None = None
    monotone_violations: int | None = None

    KEYS = (
        "straightness", "crossing_v", "cost_l2sq", "cost_l1", "cost_p15", "relative_l2_cost",
        "marginal_t025", "marginal_t05", "marginal_t075", "burgers_residual", "monotone_violations",
    )

    def as_dict(self) -> dict:
        """Flat mapping with the stable key order of :attr:`KEYS`."""
        flat = {
            "straightness": self.straightness,
            "crossing_v": self.crossing_v,
            "relative_l2_cost": self.relative_l2_cost,
            "burgers_residual": self.burgers_residual,
            "monotone_violations": self.monotone_violations,
        }
        for c in STANDARD_COSTS:
            flat[c.name] = self.transport_costs.get(c.name)
        for t, key in _MARGINAL_KEYS.items():
            flat[key] = self.marginal_distances.get(t)
        return {k: flat[k] for k in self.KEYS}


def coupling_report(coupling: Coupling, cap: int = RELATIVE_COST_CAP) -> MetricsReport:
    """Metrics that depend only on a coupling's endpoint pairs."""
    report = MetricsReport(transport_costs={c.name: transport_cost(coupling, c) for c in STANDARD_COSTS})
    if coupling.n <= cap:
        report.relative_l2_cost = relative_l2_cost(coupling, cap)
    if coupling.d == 1:
        report.monotone_violations = monotone_violations(coupling)
    return report
