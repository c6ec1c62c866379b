import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectflow.schedules import (
    VE,
    VP,
    ConstSpeedVP,
    Linear,
    StraightReparam,
    SubVP,
    derive_eta_sigma,
    from_config,
    interpolate,
    pfode_target,
    schedule_eval,
)

ALL = [Linear(), VP(), SubVP(), VE(0.01, 20.0), ConstSpeedVP(), StraightReparam(VP())]
IDS = [s.name for s in ALL[:-1]] + ["straight-vp"]


def test_linear_midpoint():
    assert schedule_eval(Linear(), 0.5) == (0.5, 0.5, 1.0, -1.0)


def test_vp_endpoint():
    a, b, _, _ = schedule_eval(VP(), 1.0)
    assert a == 1.0 and b == 0.0


def test_vp_start_matches_high_precision():
    mpmath.mp.dps = 40
    alpha = mpmath.exp(-mpmath.mpf("19.9") / 4 - mpmath.mpf("0.1") / 2)
    beta = mpmath.sqrt(1 - alpha**2)
    a, b, _, _ = schedule_eval(VP(19.9, 0.1), 0.0)
    assert a == pytest.approx(float(alpha), rel=1e-14)
    assert b == pytest.approx(float(beta), rel=1e-14)


@pytest.mark.parametrize("s", [Linear(), VP(), SubVP()], ids=["linear", "vp", "sub-vp"])
def test_boundary_at_one(s):
    a, b, _, _ = schedule_eval(s, 1.0)
    assert a == pytest.approx(1.0, abs=1e-15) and b == pytest.approx(0.0, abs=1e-15)


def test_linear_boundary_at_zero():
    a, b, _, _ = schedule_eval(Linear(), 0.0)
    assert (a, b) == (0.0, 1.0)


@pytest.mark.parametrize("s", ALL, ids=IDS)
def test_derivatives_match_finite_differences(s):
    ts = np.random.default_rng(0).uniform(0.01, 0.99, 50)
    step = 1e-6
    _, _, ad, bd = s.coefficients(ts)
    fd_a = (s.alpha(ts + step) - s.alpha(ts - step)) / (2 * step)
    fd_b = (s.beta(ts + step) - s.beta(ts - step)) / (2 * step)
    assert np.allclose(ad, fd_a, rtol=1e-5, atol=1e-9)
    assert np.allclose(bd, fd_b, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("t", [-0.1, 1.5, np.nan])
def test_domain_error(t):
    with pytest.raises(ValueError):
        schedule_eval(Linear(), t)


def test_array_input():
    a, b, ad, bd = schedule_eval(VP(), np.array([0.1, 0.5]))
    assert a.shape == (2,) and bd.shape == (2,)


def test_interpolate_linear():
    x, xd = interpolate(Linear(), np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.25)
    assert np.allclose(x, [0.25, 0.75]) and np.allclose(xd, [1.0, -1.0])


@pytest.mark.parametrize("s", ALL, ids=IDS)
def test_interpolate_degenerate_pair(s):
    p = np.array([0.3, -1.2])
    x, _ = interpolate(s, p, p, 0.4)
    a, b, _, _ = schedule_eval(s, 0.4)
    assert np.allclose(x, (a + b) * p)


def test_interpolate_linear_constant_pair():
    p = np.array([2.0, 5.0])
    for t in (0.0, 0.3, 1.0):
        assert np.allclose(interpolate(Linear(), p, p, t)[0], p)


def test_ve_interpolation_closed_form():
    s = VE(0.01, 20.0)
    r = 20.0 / 0.01
    beta = 0.01 * np.sqrt(r ** (2 * 0.5) - 1)
    beta_dot = -0.01 * np.log(r) * r ** (2 * 0.5) / np.sqrt(r ** (2 * 0.5) - 1)
    x, xd = interpolate(s, np.array([1.0]), np.array([1.0]), 0.5)
    assert x[0] == pytest.approx(1 + beta, rel=1e-12)
    assert xd[0] == pytest.approx(beta_dot, rel=1e-12)


def test_interpolate_shape_mismatch():
    with pytest.raises(ValueError):
        interpolate(Linear(), np.zeros(2), np.zeros(3), 0.5)


def test_vp_eta_matches_log_alpha_slope():
    es = derive_eta_sigma(VP())
    ts = np.linspace(0.05, 0.95, 19)
    step = 1e-5
    fd = (np.log(VP().alpha(ts + step)) - np.log(VP().alpha(ts - step))) / (2 * step)
    assert np.allclose(es.eta(ts), -fd, atol=1e-6)


def test_linear_sigma_closed_form():
    es = derive_eta_sigma(Linear())
    ts = np.random.default_rng(1).uniform(0.01, 0.99, 20)
    assert np.allclose(es.sigma_sq(ts), 2 * (1 - ts) / ts, rtol=1e-12)


def test_ve_eta_is_zero():
    es = derive_eta_sigma(VE())
    assert np.all(es.eta(np.linspace(0.1, 0.9, 9)) == 0.0)


@pytest.mark.parametrize("s", ALL, ids=IDS)
def test_sigma_sq_nonnegative(s):
    ts = np.linspace(0.01, 0.99, 99)
    assert np.all(derive_eta_sigma(s).sigma_sq(ts) >= 0)


def test_derive_eta_sigma_rejects_vanishing_alpha():
    class Broken(Linear):
        def _coefficients(self, t):
            a = np.where(np.abs(t - 0.5) < 0.01, 0.0, t)
            return a, 1.0 - t, np.ones_like(t), -np.ones_like(t)

    with pytest.raises(ValueError):
        derive_eta_sigma(Broken())


@pytest.mark.parametrize("s", [Linear(), VP(), SubVP(), VE(0.01, 20.0), ConstSpeedVP()],
                         ids=["linear", "vp", "sub-vp", "ve", "const-speed-vp"])
def test_pfode_target_equals_interpolation_velocity(s):
    rng = np.random.default_rng(2)
    x1 = rng.standard_normal((100, 3))
    xi = rng.standard_normal((100, 3))
    t = rng.uniform(0.01, 0.99, 100)
    _, xdot = interpolate(s, x1, xi, t)
    assert np.max(np.abs(pfode_target(s, x1, xi, t) - xdot)) <= 1e-6


def test_pfode_target_ve_zero_noise():
    out = pfode_target(VE(), np.array([[1.5]]), np.array([[0.0]]), 0.3)
    assert out[0, 0] == 0.0


def test_pfode_target_linear_value():
    out = pfode_target(Linear(), np.array([2.0]), np.array([1.0]), 0.5)
    assert np.allclose(out, [1.0])


def test_pfode_target_singular_without_clamp():
    with pytest.raises(ValueError):
        pfode_target(Linear(), np.array([1.0]), np.array([1.0]), 1.0)
    out = pfode_target(Linear(), np.array([1.0]), np.array([1.0]), 1.0, clamp=True)
    assert np.all(np.isfinite(out))


def test_from_config_names():
    assert isinstance(from_config("sub-vp"), SubVP)
    assert from_config({"name": "vp", "a": 10.0}).a == 10.0
    assert isinstance(from_config({"name": "straight", "base": "vp"}).base, VP)
    with pytest.raises(ValueError):
        from_config("cosine")
    with pytest.raises(ValueError):
        VE(1.0, 0.5)


@given(
    st.floats(0.0, 1.0),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
)
def test_straight_reparam_stays_on_segment(t, x0, x1):
    x0, x1 = np.array(x0), np.array(x1)
    x, _ = interpolate(StraightReparam(VP()), x1, x0, t)
    a = StraightReparam(VP()).alpha(t)
    assert 0.0 <= a <= 1.0
    assert np.max(np.abs(x - (x0 + a * (x1 - x0)))) <= 1e-12 * (1 + np.abs(x1).max() + np.abs(x0).max())
    # cross product of (x - x0) with (x1 - x0) vanishes for collinear points
    u, w = x - x0, x1 - x0
    assert abs(u[0] * w[1] - u[1] * w[0]) <= 1e-12 * (1 + np.dot(w, w))


@given(st.floats(0.01, 0.99))
def test_prop_identity_random_time(t):
    x1 = np.array([0.7, -1.1])
    xi = np.array([-0.3, 2.0])
    for s in (VP(), SubVP(), Linear()):
        _, xdot = interpolate(s, x1, xi, t)
        assert np.max(np.abs(pfode_target(s, x1, xi, t) - xdot)) <= 1e-6
