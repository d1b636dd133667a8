import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exitwell import (DomainRangeError, NumericalError, build_curve, build_potential, exact_radial_exit_time,
                      mc_exit, radial_bvp, radial_eigen, radial_profile)
from exitwell.validate import (McResult, extrapolate_exit_mean, quadratic_profile,
                               rayleigh_quotient)

from conftest import radial_setup


def series_oracle(eps):
    """(1/2) sum_n T^n / (n n!) with T = 1/(2 eps^2)."""
    t = 1 / (2 * eps**2)
    total, term, n = 0.0, 1.0, 0
    while True:
        n += 1
        term *= t / n
        total += term / n
        if term / n < 1e-17 * total:
            return total / 2


@pytest.mark.parametrize("eps", [0.5, 0.4, 0.3, 0.25])
def test_exact_oracle_matches_series(eps):
    assert exact_radial_exit_time(quadratic_profile(), 1.0, eps) == pytest.approx(
        series_oracle(eps), rel=1e-12)


def test_exact_oracle_value_half():
    assert exact_radial_exit_time(quadratic_profile(), 1.0, 0.5) == pytest.approx(1.8419357552702,
                                                                                    rel=1e-12)


def test_nested_quadrature_branch_agrees_with_closed_form():
    prof = quadratic_profile()
    generic = type(prof)(v=prof.v, dv=prof.dv, lap=prof.lap, quadratic_scale=None)
    for eps in (0.5, 0.35):
        assert exact_radial_exit_time(generic, 1.0, eps) == pytest.approx(
            exact_radial_exit_time(prof, 1.0, eps), rel=1e-9)


def test_exact_oracle_off_centre():
    eps = 0.5
    prof = quadratic_profile()
    # -eps^2 (u'' + u'/r) + r u' = 1 checked by finite differences at r = 0.5
    u = lambda r: exact_radial_exit_time(prof, 1.0, eps, r)
    h = 1e-3
    r = 0.5
    d1 = (u(r + h) - u(r - h)) / (2 * h)
    d2 = (u(r + h) - 2 * u(r) + u(r - h)) / h**2
    assert -eps**2 * (d2 + d1 / r) + r * d1 == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("eps", [0.5, 0.3, 0.1])
def test_radial_bvp_second_order(eps):
    prof = quadratic_profile()
    exact = exact_radial_exit_time(prof, 1.0, eps)
    e1 = abs(radial_bvp(prof, 1.0, eps, 1024).u0 / exact - 1)
    e2 = abs(radial_bvp(prof, 1.0, eps, 2048).u0 / exact - 1)
    assert e2 < 1e-5
    assert 3.0 < e1 / e2 < 5.0


def test_radial_bvp_quartic_nested_oracle():
    pot = build_potential({"kind": "radial_power", "k": 4, "scale": 1.0})
    prof = radial_profile(pot)
    sol = radial_bvp(prof, 1.0, 0.5, 4096)
    assert sol.u0_reference is None
    assert sol.monotone
    assert sol.u0 == pytest.approx(exact_radial_exit_time(prof, 1.0, 0.5), rel=1e-6)


def test_radial_eigen_refinement_and_rayleigh():
    prof = quadratic_profile()
    eps = 0.4
    lams = [radial_eigen(prof, 1.0, eps, n) for n in (1024, 2048, 4096)]
    ratio = (lams[0] - lams[1]) / (lams[1] - lams[2])
    assert ratio == pytest.approx(4.0, rel=0.05)
    lam, r, x, bands = radial_eigen(prof, 1.0, eps, 2048, return_vector=True)
    assert rayleigh_quotient(x, bands) == pytest.approx(lam, abs=1e-10)


def test_radial_eigen_vs_exact_exit_time():
    # lambda * u(0) -> 1 as eps -> 0 (principal mode dominates)
    prof = quadratic_profile()
    prods = [radial_eigen(prof, 1.0, e, 4096) * exact_radial_exit_time(prof, 1.0, e)
             for e in (0.4, 0.3, 0.25)]
    assert np.all(np.diff(np.abs(np.array(prods) - 1)) < 0)
    assert prods[-1] == pytest.approx(1.0, abs=0.02)


def _mc_fixture():
    curve, pot = radial_setup()
    return curve, pot


def test_mc_determinism_and_thread_independence():
    curve, pot = _mc_fixture()
    a = mc_exit(pot, curve, 0.5, (0.0, 0.0), 1e-3, 64, seed=11, threads=1)
    b = mc_exit(pot, curve, 0.5, (0.0, 0.0), 1e-3, 64, seed=11, threads=3)
    c = mc_exit(pot, curve, 0.5, (0.0, 0.0), 1e-3, 64, seed=12, threads=1)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.exit_points, b.exit_points)
    assert not np.array_equal(a.times, c.times)
    assert a.histogram.sum() == 64
    assert np.all(np.linalg.norm(a.exit_points, axis=1) >= 1.0)


def test_mc_mean_near_exact_coarse():
    curve, pot = _mc_fixture()
    res = mc_exit(pot, curve, 0.5, (0.0, 0.0), 1e-3, 600, seed=5)
    exact = exact_radial_exit_time(quadratic_profile(), 1.0, 0.5)
    # coarse step: discrete monitoring overestimates by O(sqrt(dt)); allow 4 SE + bias
    assert abs(res.mean - exact) < 4 * res.stderr + 0.1 * exact


def test_mc_budget_and_errors():
    curve, pot = _mc_fixture()
    res = mc_exit(pot, curve, 0.5, (0.0, 0.0), 1e-3, 40, seed=1, max_steps=1000)
    assert 1 <= res.n_overrun < 40
    assert res.times.size == 40 - res.n_overrun
    with pytest.raises(NumericalError):
        mc_exit(pot, curve, 0.3, (0.0, 0.0), 1e-3, 4, seed=1, max_steps=10)
    with pytest.raises(DomainRangeError):
        mc_exit(pot, curve, 0.5, (2.0, 0.0), 1e-3, 4, seed=1)
    with pytest.raises(ValueError):
        mc_exit(pot, curve, 0.5, (0.0, 0.0), -1e-3, 4, seed=1)


def test_mc_ellipse_and_star_exit_outside():
    pot = build_potential({"kind": "quadratic_form", "matrix": [[1.0, 0.0], [0.0, 1.0]]})
    for desc in ({"kind": "ellipse", "a": 1.3, "b": 0.8},
                 {"kind": "fourier_star", "mean_radius": 1.0, "cos": [0.0, 0.0, 0.1]}):
        curve = build_curve(desc)
        res = mc_exit(pot, curve, 0.6, (0.1, 0.0), 1e-3, 40, seed=3)
        assert not np.any(curve.contains(res.exit_points))


def _fake(mean, se, dt):
    return McResult(10, dt, mean, se, np.zeros(1), 0, 0, np.zeros(0), np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(true=st.floats(0.5, 50), slope=st.floats(-10, 10), dt=st.floats(1e-6, 1e-2))
def test_extrapolation_removes_sqrt_dt_bias(true, slope, dt):
    coarse = _fake(true + slope * math.sqrt(dt), 0.1, dt)
    fine = _fake(true + slope * math.sqrt(dt / 2), 0.1, dt / 2)
    ex = extrapolate_exit_mean(coarse, fine)
    assert ex.mean == pytest.approx(true, rel=1e-9, abs=1e-9)
    assert ex.stderr > 0.1
    with pytest.raises(ValueError):
        extrapolate_exit_mean(fine, coarse)


def test_poisson_limit_without_potential():
    from exitwell.validate import RadialProfile
    flat = RadialProfile(v=lambda r: 0 * np.asarray(r, float), dv=lambda r: 0 * np.asarray(r, float),
                         lap=lambda r: 0 * np.asarray(r, float), quadratic_scale=None)
    eps = 0.7
    sol = radial_bvp(flat, 1.0, eps, 2048)
    np.testing.assert_allclose(sol.u, (1 - sol.r**2) / (4 * eps**2), atol=1e-6)


def test_mc_histogram_flat_and_stderr_scaling():
    from scipy.stats import chi2
    curve, pot = _mc_fixture()
    small = mc_exit(pot, curve, 0.6, (0.0, 0.0), 1e-3, 500, seed=21)
    big = mc_exit(pot, curve, 0.6, (0.0, 0.0), 1e-3, 2000, seed=22)
    assert big.histogram.sum() == 2000
    assert np.all(big.times > 0)
    expected = 2000 / 36
    stat = float(np.sum((big.histogram - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, 35)
    assert small.stderr / big.stderr == pytest.approx(2.0, rel=0.2)


def test_discrete_eigenvalue_leading_law():
    # lambda_hat eps^2 exp(1/(2 eps^2)) -> 1 for the unit disk with V = r^2/2;
    # the approach is monotone once eps <= 0.3
    prof = quadratic_profile()
    vals = [radial_eigen(prof, 1.0, e, 8192) * e**2 * math.exp(1 / (2 * e**2))
            for e in (0.3, 0.25, 0.2)]
    assert np.all(np.diff(np.abs(np.array(vals) - 1)) < 0)
    assert vals[-1] == pytest.approx(1.0, abs=0.1)
