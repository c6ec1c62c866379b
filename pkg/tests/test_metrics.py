import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as quad
from scipy.optimize import linear_sum_assignment

from rectflow import metrics as M
from rectflow.core import Coupling, seeded_rng
from rectflow.distributions import DiagonalGaussian, Empirical
from rectflow.ode import SolverSpec, TrajectoryEnsemble, integrate
from rectflow.velocity import ConstantVelocity, ExactVelocity, Mlp


def straight_ensemble(z0, z1, k=11):
    times = np.linspace(0, 1, k)
    states = np.stack([t * z1 + (1 - t) * z0 for t in times])
    return TrajectoryEnsemble(times, states, k - 1)


# -- straightness ----------------------------------------------------------

def test_straight_paths_have_zero_straightness():
    rng = seeded_rng(0)
    traj = straight_ensemble(rng.standard_normal((50, 3)), rng.standard_normal((50, 3)))
    assert M.straightness(traj) <= 1e-12


def test_quarter_circle_matches_quadrature():
    k = 1024
    times = np.linspace(0, 1, k + 1)
    path = np.stack([np.cos(np.pi * times / 2), np.sin(np.pi * times / 2)], axis=1)
    traj = TrajectoryEnsemble(times, path[:, None, :], k)

    def integrand(t):
        vel = np.pi / 2 * np.array([-np.sin(np.pi * t / 2), np.cos(np.pi * t / 2)])
        return np.sum((np.array([-1.0, 1.0]) - vel) ** 2)

    expected, _ = quad.quad(integrand, 0, 1, epsabs=1e-13)
    assert abs(M.straightness(traj) - expected) <= 1e-3


def test_straightness_needs_two_times():
    traj = TrajectoryEnsemble(np.array([0.0]), np.zeros((1, 2, 1)), 0)
    with pytest.raises(ValueError):
        M.straightness(traj)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_straightness_zero_for_any_straight_ensemble(seed, k):
    rng = seeded_rng(seed)
    traj = straight_ensemble(rng.standard_normal((10, 2)) * 5, rng.standard_normal((10, 2)) * 5, k)
    assert M.straightness(traj) <= 1e-12 * (1 + M.transport_cost(Coupling(traj.first, traj.last)))


# -- crossing measure ------------------------------------------------------

def linear_gaussian_field(z, t):
    return (2 * t - 1) / (t * t + (1 - t) ** 2) * z


def test_identity_coupling_has_zero_crossing():
    x = seeded_rng(1).standard_normal((200, 1))
    pairs = Coupling(x, x.copy())
    assert M.crossing_v(pairs, ConstantVelocity([0.0]), 16, seeded_rng(2)) == 0.0
    assert M.monotone_violations(pairs) == 0


def test_independent_gaussians_crossing_is_half_pi():
    # quadrature oracle for the residual variance of the linear-Gaussian regression
    resid = lambda t: 2.0 - (2 * t - 1) ** 2 / (t * t + (1 - t) ** 2)
    oracle, _ = quad.quad(resid, 0, 1)
    assert oracle == pytest.approx(np.pi / 2, abs=1e-10)
    rng = seeded_rng(3)
    pairs = Coupling(rng.standard_normal((40_000, 1)), rng.standard_normal((40_000, 1)))
    est = M.crossing_v(pairs, linear_gaussian_field, 32, rng)
    assert est == pytest.approx(np.pi / 2, rel=0.02)


def test_crossing_pairs_have_positive_crossing():
    # s=+-1: X0 = s + sigma*xi, X1 = -s; the exact regression is a two-way posterior
    sigma = 0.1

    def field(z, t):
        z = z[:, 0]
        sd = (1 - t) * sigma
        centres = np.array([1 - 2 * t, -(1 - 2 * t)])
        logw = -((z[:, None] - centres) ** 2) / (2 * sd * sd)
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        s = np.array([1.0, -1.0])
        cond = -2 * s - (z[:, None] - s * (1 - 2 * t)) / (1 - t)
        return np.sum(w * cond, axis=1, keepdims=True)

    rng = seeded_rng(4)
    s = rng.choice([-1.0, 1.0], size=(5000, 1))
    pairs = Coupling(s + sigma * rng.standard_normal((5000, 1)), -s)
    assert M.crossing_v(pairs, field, 64, rng) > 0.0


# -- transport costs -------------------------------------------------------

def test_identity_coupling_costs_zero():
    x = seeded_rng(5).standard_normal((20, 3))
    for c in M.STANDARD_COSTS:
        assert M.transport_cost(Coupling(x, x), c) == 0.0


def test_independent_gaussian_l2_cost():
    rng = seeded_rng(6)
    pairs = Coupling(rng.standard_normal((20_000, 1)), rng.standard_normal((20_000, 1)))
    mean, se = M.transport_cost_se(pairs)
    assert abs(mean - 2.0) <= 4 * se


def test_shift_coupling_l1_cost():
    x = seeded_rng(7).standard_normal((10, 2))
    assert M.transport_cost(Coupling(x, x + np.array([3.0, 4.0])), M.L1_NORM) == pytest.approx(5.0, abs=1e-12)


def test_convex_cost_validation():
    with pytest.raises(ValueError):
        M.ConvexCost(0.5)


# -- assignment ------------------------------------------------------------

def brute_force(cost):
    n = cost.shape[0]
    perms = np.array(list(itertools.permutations(range(n))))
    return cost[np.arange(n), perms].sum(axis=1).min()


def test_assignment_zero_diagonal():
    cost = np.ones((5, 5)) - np.eye(5)
    perm = M.hungarian_assignment(cost)
    assert list(perm) == list(range(5))
    assert M.assignment_cost(cost, perm) == 0.0


def test_assignment_constant_matrix():
    cost = np.full((6, 6), 2.5)
    assert M.assignment_cost(cost, M.hungarian_assignment(cost)) == pytest.approx(15.0)


def test_assignment_brute_force_many():
    rng = seeded_rng(8)
    perms = {n: np.array(list(itertools.permutations(range(n)))) for n in range(1, 9)}
    for trial in range(1000):
        n = int(rng.integers(1, 9))
        cost = rng.random((n, n))
        if trial % 3 == 0:
            cost = np.round(cost * 4)  # plenty of ties
        perm = M.hungarian_assignment(cost)
        assert sorted(perm) == list(range(n))
        best = cost[np.arange(n), perms[n]].sum(axis=1).min()
        assert M.assignment_cost(cost, perm) == pytest.approx(best, abs=1e-12)


def test_assignment_matches_scipy():
    rng = seeded_rng(9)
    cost = rng.random((150, 150))
    rows, cols = linear_sum_assignment(cost)
    assert M.assignment_cost(cost, M.hungarian_assignment(cost)) == pytest.approx(cost[rows, cols].sum(), abs=1e-9)


def test_assignment_rejects_bad_input():
    with pytest.raises(ValueError):
        M.hungarian_assignment(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        M.hungarian_assignment(np.array([[0.0, np.inf], [1.0, 0.0]]))


# -- relative cost -----------------------------------------------------------

def test_relative_cost_of_optimal_coupling():
    rng = seeded_rng(10)
    a, b = rng.standard_normal((60, 2)), rng.standard_normal((60, 2))
    cost = M.squared_distance_matrix(a, b)
    rows, cols = linear_sum_assignment(cost)
    assert abs(M.relative_l2_cost(Coupling(a, b[cols]))) <= 1e-9


def test_relative_cost_of_crossing_pair():
    pairs = Coupling([[-1.0], [1.0]], [[1.0], [-1.0]])
    assert M.relative_l2_cost(pairs) == pytest.approx(4.0, abs=1e-12)


def test_relative_cost_cap():
    x = np.zeros((11, 1))
    with pytest.raises(ValueError):
        M.relative_l2_cost(Coupling(x, x), cap=10)


def test_relative_cost_vanishes_in_high_dimension():
    # a random net flow in d=32: the assignment just returns the pairing
    rng = seeded_rng(11)
    x0 = rng.standard_normal((512, 32))
    x1 = integrate(Mlp.init(32, (64, 64), rng), x0, SolverSpec(steps=50, record_every=0)).last
    pairs = Coupling(x0, x1)
    assert M.relative_l2_cost(pairs) <= 1e-3 * M.transport_cost(pairs)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_relative_cost_never_negative(seed, n):
    rng = seeded_rng(seed)
    assert M.relative_l2_cost(Coupling(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)))) >= -1e-9


# -- energy distance ---------------------------------------------------------

def test_energy_distance_identical_and_permuted():
    rng = seeded_rng(12)
    a = rng.standard_normal((100, 2))
    assert M.marginal_distance(a, a) <= 1e-12
    assert M.marginal_distance(a, a[rng.permutation(100)]) <= 1e-12


def test_energy_distance_symmetric():
    rng = seeded_rng(13)
    a, b = rng.standard_normal((40, 2)), rng.standard_normal((60, 2)) + 0.5
    assert M.marginal_distance(a, b) == pytest.approx(M.marginal_distance(b, a), rel=1e-12)


def test_energy_distance_brute_force():
    rng = seeded_rng(14)
    a, b = rng.standard_normal((7, 2)), rng.standard_normal((5, 2))
    d = lambda x, y: np.mean([np.linalg.norm(p - q) for p in x for q in y])
    expected = 2 * d(a, b) - d(a, a) - d(b, b)
    assert M.marginal_distance(a, b) == pytest.approx(expected, rel=1e-12)


def test_shifted_gaussians_rejected_at_99():
    rng = seeded_rng(15)
    a, b = rng.standard_normal((2000, 1)), 3 + rng.standard_normal((2000, 1))
    test = M.energy_test(a, b, rng, n_perm=99, level=0.99)
    assert test.rejects()
    assert test.p_value == pytest.approx(0.01)


def test_energy_test_statistic_matches_distance():
    rng = seeded_rng(16)
    a, b = rng.standard_normal((30, 2)), rng.standard_normal((45, 2))
    assert M.energy_test(a, b, rng, n_perm=9).statistic == pytest.approx(M.marginal_distance(a, b), rel=1e-10)


def test_energy_test_null_calibration():
    rng = seeded_rng(17)
    rejections = sum(
        M.energy_test(rng.standard_normal((40, 2)), rng.standard_normal((40, 2)), rng, n_perm=99).rejects()
        for _ in range(200)
    )
    # binomial(200, 0.05): mean 10, sd about 3.1
    assert 1 <= rejections <= 22


def test_ks_statistic():
    assert M.ks_statistic([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert M.ks_statistic([0.0, 1.0], [2.0, 3.0]) == 1.0


# -- Burgers -----------------------------------------------------------------

def test_burgers_constant_field():
    probes = seeded_rng(18).standard_normal((10, 2))
    assert M.burgers_residual(ConstantVelocity([1.0, -1.0]), probes, M.MARGINAL_TIMES) == 0.0


def test_burgers_self_similar_field():
    probes = seeded_rng(19).standard_normal((50, 3))
    assert M.burgers_residual(lambda z, t: z / (1 + t), probes, M.MARGINAL_TIMES) <= 1e-6


def test_burgers_two_atom_field_is_curved():
    v = ExactVelocity.from_distributions(DiagonalGaussian(np.zeros(2), np.ones(2)),
                                        Empirical(np.array([[-3.0, 0.0], [3.0, 0.0]])))
    probes = 0.1 * seeded_rng(20).standard_normal((20, 2))
    assert M.burgers_residual(v, probes, [0.5]) > 0.1


def test_burgers_rejects_boundary_times():
    with pytest.raises(ValueError):
        M.burgers_residual(ConstantVelocity([0.0]), np.zeros((1, 1)), [0.0])


# -- monotonicity ------------------------------------------------------------

def test_monotone_examples():
    x = np.arange(4.0)[:, None]
    assert M.monotone_violations(Coupling(x, x)) == 0
    assert M.monotone_violations(Coupling(x, x[::-1].copy())) == 6
    with pytest.raises(ValueError):
        M.monotone_violations(Coupling(np.zeros((2, 2)), np.zeros((2, 2))))


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=1, max_size=40))
def test_monotone_violations_brute_force(rows):
    left = np.array([[r[0]] for r in rows], float)
    right = np.array([[r[1]] for r in rows], float)
    expected = sum(
        1 for i in range(len(rows)) for j in range(len(rows))
        if left[i, 0] < left[j, 0] and right[i, 0] > right[j, 0]
    )
    assert M.monotone_violations(Coupling(left, right)) == expected


def test_rectified_gaussian_coupling_is_monotone():
    src, tgt = DiagonalGaussian([0.0], [1.0]), DiagonalGaussian([3.0], [0.5])
    v = ExactVelocity.from_distributions(src, tgt)
    z0 = seeded_rng(21).standard_normal((500, 1))
    z1 = integrate(v, z0, SolverSpec(steps=1000, record_every=0)).last
    assert M.monotone_violations(Coupling(z0, z1)) == 0
    assert np.max(np.abs(z1 - (3.0 + 0.5 * z0))) <= 1e-2


# -- report ------------------------------------------------------------------

def test_report_keys_and_values():
    rng = seeded_rng(22)
    pairs = Coupling(rng.standard_normal((30, 1)), rng.standard_normal((30, 1)))
    report = M.coupling_report(pairs).as_dict()
    assert list(report) == list(M.MetricsReport.KEYS)
    assert report["cost_l2sq"] == pytest.approx(M.transport_cost(pairs))
    assert report["relative_l2_cost"] >= -1e-9
    assert isinstance(report["monotone_violations"], int)
    assert report["straightness"] is None


def test_report_skips_relative_cost_above_cap():
    x = np.zeros((5, 2))
    assert M.coupling_report(Coupling(x, x), cap=4).relative_l2_cost is None
