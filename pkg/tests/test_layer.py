import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad

from exitwell import AssumptionError
from exitwell.geometry import locate_points
from exitwell.layer import (LayerPolynomial, apply_layer_operator, layer_residual,
                            layer_zeta_moment, phi_sequence, solve_layer_ode, u_sequence)

from conftest import circle_angle


def anisotropic_closed_form(curve):
    """Traces of V = (x^2 + 2y^2)/2 on the unit circle, with tangential derivatives.

    V(r, phi) = r^2 w(phi), w = (1 + sin^2 phi)/2, so along the inward normal
    theta0 = w, theta1 = -2w, theta2 = w; the curvature is 1.
    """
    phi = circle_angle(curve)
    w = (1 + np.sin(phi) ** 2) / 2
    dw = np.sin(phi) * np.cos(phi)
    th0, th1, th2 = w, -2 * w, w
    d0, d1 = dw, -2 * dw
    return th0, th1, th2, d0, d1, 1.0


def radial_closed_form(curve):
    one = np.ones(curve.grid_size)
    return 0.5 * one, -one, 0.5 * one, 0 * one, 0 * one, 1.0


def phi1_closed_form(th1, th2, d0, d1, kappa):
    mix = d0 * d1 + 2 * th1 * th2
    return np.array([0 * th1, -(-kappa + mix / th1**2), mix / (2 * th1)])


def u2_closed_form(th1, th2, d0, d1, kappa):
    """U_2 derived symbolically from the recurrence and verified by substitution."""
    mix = d0 * d1 + 2 * th1 * th2
    b = 3 * mix + 2 * d0 * d1
    return np.array([0 * th1, kappa / th1**2 - b / th1**4,
                     -kappa / th1 + b / (2 * th1**3), -mix / (2 * th1**2)])


@pytest.mark.parametrize("bench", ["radial", "anisotropic"])
def test_first_terms_match_closed_forms(bench, request):
    exp = request.getfixturevalue(bench)
    th0, th1, th2, d0, d1, kappa = (radial_closed_form if bench == "radial"
                                    else anisotropic_closed_form)(exp.curve)
    np.testing.assert_allclose(exp.traces.theta[1], th1, atol=1e-13)
    np.testing.assert_array_equal(exp.phis[0].coeffs, np.ones((1, exp.curve.grid_size)))
    np.testing.assert_allclose(exp.phis[1].coeffs, phi1_closed_form(th1, th2, d0, d1, kappa),
                               atol=1e-10)
    np.testing.assert_allclose(exp.us[0].coeffs, np.array([0 * th1, -1 / th1]), atol=1e-12)
    np.testing.assert_allclose(exp.us[1].coeffs, u2_closed_form(th1, th2, d0, d1, kappa),
                               atol=1e-10)


def test_radial_layer_values(radial):
    np.testing.assert_allclose(radial.phis[1].coeffs[:, 0], [0, 2, 0.5], atol=1e-13)
    np.testing.assert_allclose(radial.us[1].coeffs[:, 0], [0, 4, 2.5, 0.5], atol=1e-13)
    np.testing.assert_allclose([np.mean(p.zeta_slope) for p in radial.phis[1:]],
                               [2, 4, 24, 208], rtol=1e-12)
    np.testing.assert_allclose([np.mean(u.zeta_slope) for u in radial.us],
                               [1, 4, 32, 336, 4224], rtol=1e-12)


def test_first_right_side_radial(radial):
    # L_0 applied to exp(theta1 zeta) is (zeta + 1) exp(-zeta) in the radial case
    g1 = apply_layer_operator(0, radial.phis[0], radial.data)
    np.testing.assert_allclose(g1.coeffs[:2], np.ones((2, g1.coeffs.shape[1])), atol=1e-13)
    np.testing.assert_allclose(g1.coeffs[2:], 0, atol=1e-13)


def _bivariate(seq, start):
    """sum_j e^(j + start) p_j(zeta) as a coefficient grid [e power, zeta power]."""
    deg = max(p.shape[0] for p in seq)
    grid = np.zeros((len(seq) + start, deg))
    for j, p in enumerate(seq):
        grid[j + start, :p.shape[0]] = p
    return grid


def _mul2d(a, b):
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if a[i, j]:
                out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
    return out


def _add2d(*grids):
    shape = tuple(max(g.shape[k] for g in grids) for k in range(2))
    out = np.zeros(shape)
    for g in grids:
        out[:g.shape[0], :g.shape[1]] += g
    return out


def _radial_generator(grid):
    """``eps^2 r exp(zeta) H[p exp(-zeta)]`` for the radial benchmark, e = eps^2.

    With ``H = -eps^2 (d_rr + d_r / r) + r d_r``, ``r = 1 - e zeta`` and
    ``d_r = -d_zeta / e`` this is
    ``-r (p'' - 2p' + p) + e (p' - p) - r^2 (p' - p)``.
    """
    p0 = grid
    p1 = npoly.polyder(grid, axis=1)
    p2 = npoly.polyder(p1, axis=1)
    r = np.array([[1.0, 0.0], [0.0, -1.0]])
    e = np.array([[0.0], [1.0]])
    slope = _add2d(p1, -p0)
    return _add2d(-_mul2d(r, _add2d(p2, -2 * p1, p0)), _mul2d(e, slope),
                  -_mul2d(_mul2d(r, r), slope))


def test_radial_layers_solve_exact_generator(radial):
    """Independent check of the recurrences: the exact radial operator kills
    the truncated layer sums up to the first neglected power of eps^2."""
    n = radial.order
    phis = [p.coeffs[:, 0] for p in radial.phis]
    res = _radial_generator(_bivariate(phis, 0))
    # eigenfunction layer: all powers e^0 .. e^n vanish
    tol = 1e-11 * np.max(np.abs(_bivariate(phis, 0)))
    np.testing.assert_allclose(res[:n + 1], 0, atol=tol)
    assert np.max(np.abs(res[n + 1])) > 1e-3
    us = [u.coeffs[:, 0] for u in radial.us[:n]]
    res_u = _radial_generator(_bivariate(us, 1))
    # exit-time layer: generator equals eps^2 (1 - e zeta) times the Phi sum,
    # i.e. sum_j e^(j+1) (1 - e zeta) Phi_j
    src = _mul2d(np.array([[1.0, 0.0], [0.0, -1.0]]), _bivariate(phis[:n], 1))
    diff = _add2d(res_u, -src)
    np.testing.assert_allclose(diff[:n + 1], 0, atol=tol)


def _layer_sum(curve, seq, eps, points, first_power=0):
    s, tau, _ = locate_points(curve, points)
    z = tau / eps**2
    out = np.zeros(len(points))
    for j, p in enumerate(seq):
        c, th = p.interpolated(s)
        out += eps ** (2 * (j + first_power)) * npoly.polyval(z, c.T, tensor=False) * np.exp(th * z)
    return out


def _generator_fd(curve, pot, f, x, h):
    """-eps^2 Laplacian + grad V . grad by fourth-order finite differences in x."""
    lap = 0.0
    grad = np.zeros_like(x)
    f0 = f(x)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fp, fm, fp2, fm2 = f(x + e), f(x - e), f(x + 2 * e), f(x - 2 * e)
        lap = lap + (-fp2 + 16 * fp - 30 * f0 + 16 * fm - fm2) / (12 * h * h)
        grad[:, k] = (-fp2 + 8 * fp - 8 * fm + fm2) / (12 * h)
    return lap, np.sum(pot.gradient(x) * grad, axis=1)


def test_layers_solve_generator_by_finite_differences(anisotropic):
    """Non-radial check independent of the operator family: the generator,
    discretized in Cartesian coordinates, annihilates the order-N eigenfunction
    layer up to O(eps^(2N)); the order-N exit-time layer reproduces the Phi sum
    to the same order."""
    exp = anisotropic
    curve, pot = exp.curve, exp.potential
    rng = np.random.default_rng(7)
    s = rng.uniform(0, curve.length, 24)
    z = rng.uniform(0.2, 3.0, 24)

    def residuals(eps, n):
        x = curve.point_at(s) + (eps**2 * z)[:, None] * curve.normal_at(s)
        h = 2e-3 * eps**2
        lap, adv = _generator_fd(curve, pot, lambda y: _layer_sum(curve, exp.phis[:n + 1], eps, y),
                                 x, h)
        r_phi = np.max(np.abs(-eps**2 * lap + adv))
        lap, adv = _generator_fd(curve, pot, lambda y: _layer_sum(curve, exp.us[:n], eps, y, 1),
                                 x, h)
        r_u = np.max(np.abs(-eps**2 * lap + adv - _layer_sum(curve, exp.phis[:n], eps, x)))
        return r_phi, r_u

    e1, e2 = 0.2, 0.15
    for n in range(1, 5):
        a1, b1 = residuals(e1, n)
        a2, b2 = residuals(e2, n)
        rate_phi = np.log(a1 / a2) / np.log(e1 / e2)
        rate_u = np.log(b1 / b2) / np.log(e1 / e2)
        assert abs(rate_phi - 2 * n) < 0.7, (n, rate_phi)
        assert abs(rate_u - 2 * n) < 0.7, (n, rate_u)


@pytest.mark.parametrize("bench", ["radial", "anisotropic", "ellipse_exp"])
def test_residuals_degrees_and_boundary_values(bench, request):
    exp = request.getfixturevalue(bench)
    data = exp.data
    rng = np.random.default_rng(3)
    idx = rng.integers(0, exp.curve.grid_size, 20)
    zeta = rng.uniform(0, 5, 20)
    for j, phi in enumerate(exp.phis):
        assert phi.degree <= 2 * j
        if j == 0:
            continue
        np.testing.assert_array_equal(phi.boundary_value, 0.0)
        g = np.zeros((1, exp.curve.grid_size))
        for i in range(j):
            g = _add2d(g, apply_layer_operator(i, exp.phis[j - i - 1], data).coeffs)
        scale = 1 + np.max(np.abs(phi.coeffs))
        assert np.max(np.abs(layer_residual(phi, g, zeta, idx))) < 1e-9 * scale
    for j, u in enumerate(exp.us[:exp.order], start=1):
        assert u.degree <= 2 * j - 1
        np.testing.assert_array_equal(u.boundary_value, 0.0)


def test_solver_rejects_non_negative_rate():
    with pytest.raises(AssumptionError):
        solve_layer_ode(np.array([-1.0, 0.0]), np.ones((1, 2)), 0.0)
    bad = LayerPolynomial(np.ones((1, 2)), np.array([0.5, -1.0]), 1.0)
    with pytest.raises(AssumptionError):
        layer_zeta_moment(bad, 0)


def test_operator_needs_taylor_data(radial):
    with pytest.raises(ValueError):
        apply_layer_operator(radial.data.order, radial.phis[0], radial.data)


def test_phi_sequence_rejects_negative_order(radial):
    with pytest.raises(ValueError):
        phi_sequence(-1, radial.data)
    with pytest.raises(ValueError):
        u_sequence(3, radial.phis[:1], radial.data)


@settings(max_examples=60, deadline=None)
@given(rate=st.floats(0.2, 5.0),
       rhs=st.lists(st.floats(-10, 10), min_size=1, max_size=6),
       bv=st.floats(-3, 3),
       zeta=st.floats(0, 8))
def test_layer_ode_solution_property(rate, rhs, bv, zeta):
    th = np.array([-rate])
    g = np.array(rhs)[:, None]
    p = solve_layer_ode(th, g, bv, 1.0)
    assert p.boundary_value[0] == bv
    assert p.degree == len(rhs)
    res = layer_residual(p, g, np.array([zeta]), np.array([0]))
    scale = np.max(np.abs(p.coeffs)) * (1 + zeta) ** p.degree * rate**2 + 1
    assert abs(res[0]) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.3, 4.0), coeffs=st.lists(st.floats(-5, 5), min_size=1, max_size=5),
       r=st.integers(0, 2))
def test_zeta_moment_matches_quadrature(rate, coeffs, r):
    p = LayerPolynomial(np.array(coeffs)[:, None], np.array([-rate]), 1.0)
    ref, _ = quad(lambda z: z**r * npoly.polyval(z, coeffs) * np.exp(-rate * z), 0, np.inf,
                  epsabs=1e-13, epsrel=1e-12)
    scale = sum(abs(c) * math.factorial(m + r) / rate ** (m + r + 1)
                for m, c in enumerate(coeffs))
    assert layer_zeta_moment(p, r)[0] == pytest.approx(ref, abs=1e-9 * scale + 1e-14)
