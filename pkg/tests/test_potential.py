import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exitwell import AssumptionError, ConfigError, build_curve, build_potential, check_assumptions
from exitwell.potential import Poly2, boundary_traces


def test_poly_calculus():
    p = Poly2([(2, 1, 3.0), (0, 2, -1.0)])      # 3 x^2 y - y^2
    x = np.array([[1.5, -0.5]])
    assert p(x)[0] == pytest.approx(3 * 2.25 * -0.5 - 0.25)
    assert p.partial(0)(x)[0] == pytest.approx(6 * 1.5 * -0.5)
    assert p.partial(1)(x)[0] == pytest.approx(3 * 2.25 + 1.0)
    assert p.degree == 3 and p.low_degree == 2


def test_along_rays_matches_direct_evaluation():
    p = Poly2([(4, 0, 1.0), (1, 3, 0.3), (0, 2, 2.0)])
    base = np.array([[0.3, -0.7]])
    d = np.array([[0.6, 0.8]])
    coef = p.along_rays(base, d)
    for t in (0.0, 0.1, -0.4):
        assert np.polyval(coef[::-1, 0], t) == pytest.approx(p(base + t * d)[0], abs=1e-13)


def test_radial_power_and_gradient():
    pot = build_potential({"kind": "radial_power", "k": 4, "scale": 0.25})
    x = np.array([[0.3, 0.4]])
    assert pot.value(x)[0] == pytest.approx(0.25 * 0.5**4)
    np.testing.assert_allclose(pot.gradient(x)[0], 0.25 * 4 * 0.5**2 * x[0], rtol=1e-13)
    assert pot.is_radial()
    assert pot.origin_degree == 4


def test_laplacian_quadratic_form():
    pot = build_potential({"kind": "quadratic_form", "matrix": [[1.0, 0.0], [0.0, 2.0]]})
    assert pot.laplacian(np.zeros((1, 2)))[0] == pytest.approx(3.0)
    assert not pot.is_radial()


@pytest.mark.parametrize("desc, name", [
    ({"kind": "quadratic_form", "matrix": [[1.0, 0.0], [0.0, -1.0]]}, "positive-leading-form"),
    ({"kind": "polynomial", "terms": [[1, 0, 1.0], [2, 0, 1.0], [0, 2, 1.0]], "origin_degree": 2},
     "critical-point-at-origin"),
])
def test_assumption_violations(desc, name):
    with pytest.raises(AssumptionError) as info:
        build_potential(desc)
    assert info.value.assumption == name


@pytest.mark.parametrize("desc", [
    {"kind": "radial_power", "k": 3},
    {"kind": "nope"},
    {"kind": "quadratic_form", "matrix": [[1.0, 2.0]]},
])
def test_bad_potential_specs(desc):
    with pytest.raises((ConfigError, AssumptionError)):
        build_potential(desc)


def test_radial_traces_and_constants():
    curve = build_curve({"kind": "circle", "radius": 1.0})
    pot = build_potential({"kind": "radial_power", "k": 2, "scale": 0.5})
    tr = boundary_traces(pot, curve, 4)
    np.testing.assert_allclose(tr.theta[:3], np.array([[0.5], [-1.0], [0.5]]) + 0 * tr.theta[:3],
                               atol=1e-14)
    np.testing.assert_allclose(tr.theta[3:], 0, atol=1e-14)
    assert tr.theta_min == pytest.approx(0.5)
    rep = check_assumptions(pot, curve)
    assert rep.ok
    assert rep.c1 == pytest.approx(0.1, rel=1e-6)
    assert rep.c2 == pytest.approx(0.5, rel=1e-6)
    assert rep.c2_boundary == pytest.approx(1.0, rel=1e-12)


def test_inward_decrease_failure():
    # the well is outside the (shifted) domain, so V grows inwards somewhere
    curve = build_curve({"kind": "circle", "radius": 1.0})
    pot = build_potential({"kind": "polynomial", "origin_degree": 2,
                           "terms": [[2, 0, 0.5], [0, 2, 0.5], [4, 0, -1.0]]})
    with pytest.raises(AssumptionError):
        boundary_traces(pot, curve, 3)
        rep = check_assumptions(pot, curve)
        assert rep.ok


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.2, 3.0), b=st.floats(0.2, 3.0), phi=st.floats(0, 2 * np.pi))
def test_anisotropic_traces_closed_form(a, b, phi):
    # V = (a x^2 + b y^2)/2 on the unit circle: V(r, phi) = r^2 w(phi)
    pot = build_potential({"kind": "quadratic_form", "matrix": [[a, 0.0], [0.0, b]]})
    curve = build_curve({"kind": "circle", "radius": 1.0, "grid_size": 64})
    tr = boundary_traces(pot, curve, 3)
    ang = np.arctan2(curve.samples[:, 1], curve.samples[:, 0])
    w = (a * np.cos(ang)**2 + b * np.sin(ang)**2) / 2
    np.testing.assert_allclose(tr.theta[0], w, rtol=1e-12)
    np.testing.assert_allclose(tr.theta[1], -2 * w, rtol=1e-12)
    np.testing.assert_allclose(tr.theta[2], w, rtol=1e-12)
    assert tr.theta_min == pytest.approx(min(a, b) / 2, rel=1e-10)
