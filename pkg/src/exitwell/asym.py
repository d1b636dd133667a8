"""Assembly of the asymptotic outputs.

Given the layer sequences and the integral tables this module produces the
principal eigenvalue, the eigenfunction and mean exit time evaluators, the
constants ``K_exp`` and ``K_pow`` and the derived probabilistic quantities
(maximum exit time, torsional rigidity, quasi-stationary density, exit law).

Exponentially small and large scalars are returned as :class:`ScaledArray`
pairs so that nothing underflows at small ``eps``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainRangeError
from .geometry import DomainCurve, FourierSeries, MetricTaylor, Region, locate_points, metric_taylor
from .layer import (LayerOperatorData, LayerPolynomial, layer_operator_data, layer_zeta_moment,
                    phi_sequence, u_sequence)
from .potential import BoundaryTraces, Potential, boundary_traces
from .quad import (IntegralTable, ScaledArray, adaptive_polar_integral, collar_rule,
                   integral_table)


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


@dataclass(frozen=True)
class CutoffChi:
    """Smooth cutoff in the depth, equal to 1 below ``delta/3`` and 0 above ``2 delta/3``.

    The profile is ``chi0(3 tau / delta)`` with the C-infinity step
    ``chi0(t) = f(2 - t) / (f(2 - t) + f(t - 1))``, ``f(x) = exp(-1/x)`` for ``x > 0``.
    """

    delta: float

    @property
    def support(self) -> float:
        return 2.0 * self.delta / 3.0

    def __call__(self, tau) -> np.ndarray:
        t = 3.0 * np.asarray(tau, dtype=float) / self.delta
        a, b = _bump(2.0 - t), _bump(t - 1.0)
        return a / (a + b)


class KConstants(NamedTuple):
    """``K_exp`` (scaled form), ``K_pow`` and their sum ``K``."""

    K_exp: ScaledArray
    K_pow: float
    K: float


class ExitLaw(NamedTuple):
    """Exit-point density on the boundary grid."""

    s: np.ndarray
    density: np.ndarray
    flagged: bool


class MaxExitTime(NamedTuple):
    """``K`` together with the largest value of the evaluator on a grid."""

    K: float
    grid_max: float
    location: np.ndarray
    depth: float


@dataclass(eq=False)
class ExpansionSet:
    """Layer sequences, cutoff and per-eps integral tables for one configuration.

    Build with :func:`build_expansion`. Integral tables are computed lazily and
    cached per ``eps``.
    """

    curve: DomainCurve
    potential: Potential
    traces: BoundaryTraces
    metric: MetricTaylor
    data: LayerOperatorData
    order: int
    phis: list
    us: list
    cutoff: CutoffChi
    tables: dict = field(default_factory=dict)
    _series: FourierSeries | None = field(default=None, repr=False)
    _qsd_norm: dict = field(default_factory=dict, repr=False)

    dim = 2

    def table(self, eps: float) -> IntegralTable:
        key = float(eps)
        if key not in self.tables:
            self.tables[key] = integral_table(self.potential, self.curve, self.traces,
                                              self.phis, self.us, key)
        return self.tables[key]

    @property
    def eps_grid(self) -> list[float]:
        return sorted(self.tables, reverse=True)

    def series(self) -> FourierSeries:
        """Interpolant of all layer coefficient rows plus ``theta1``."""
        if self._series is None:
            rows = [p.coeffs for p in self.phis] + [u.coeffs for u in self.us]
            self._series = FourierSeries(np.vstack(rows + [self.traces.theta[1][None]]),
                                         self.curve.length)
        return self._series


def default_delta(curve: DomainCurve, traces: BoundaryTraces) -> float:
    """``0.9 * min(collar depth, theta_min / (4 c2))``."""
    return 0.9 * min(curve.collar_depth, traces.theta_min / (4.0 * traces.c2))


def build_expansion(curve: DomainCurve, potential: Potential, order: int = 4,
                    eps_grid: Sequence[float] = (), delta: float | None = None) -> ExpansionSet:
    """Build the layer sequences to order ``N`` and tables for ``eps_grid``.

    Parameters
    ----------
    curve, potential
        Configuration.
    order : int
        Truncation order ``N`` shared by all series.
    eps_grid : sequence of float
        Values of ``eps`` whose tables are computed up front.
    delta : float, optional
        Cutoff width; defaults to :func:`default_delta`.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    depth = order + 2
    traces = boundary_traces(potential, curve, depth)
    metric = metric_taylor(curve, depth)
    data = layer_operator_data(metric, traces)
    phis = phi_sequence(order, data)
    us = u_sequence(order + 1, phis, data)
    if delta is None:
        delta = default_delta(curve, traces)
    if not 0 < delta <= curve.collar_depth:
        raise DomainRangeError(f"cutoff width {delta:g} must lie in (0, {curve.collar_depth:g}]")
    exp = ExpansionSet(curve, potential, traces, metric, data, order, phis, us, CutoffChi(delta))
    for e in eps_grid:
        exp.table(e)
    return exp


def _order(exp: ExpansionSet, order: int | None) -> int:
    if order is None:
        return exp.order
    if not 0 <= order <= exp.order:
        raise ValueError(f"order must lie in 0..{exp.order}")
    return order


def _numerator(exp: ExpansionSet, eps: float, order: int) -> float:
    """Scaled ``sum_(j <= N) eps^(2j - 2) mu_j``."""
    mu = exp.table(eps).mu.scaled
    return float(sum(eps ** (2 * j - 2) * mu[j] for j in range(order + 1)))


def eigenvalue(exp: ExpansionSet, eps: float, order: int | None = None) -> ScaledArray:
    """Principal eigenvalue ``eps^2 sum_j eps^(2j-2) mu_j / int exp(-V/eps^2)``.

    A non-positive truncated numerator is returned as is (with its sign),
    never clipped; callers flag it.
    """
    n = _order(exp, order)
    t = exp.table(eps)
    return ScaledArray(np.asarray(eps**2 * _numerator(exp, eps, n) / t.volume), t.mu.log_scale)


def k_constants(exp: ExpansionSet, eps: float, order: int | None = None) -> KConstants:
    """``K_exp = eps^-2 volume / sum_j eps^(2j-2) mu_j`` and
    ``K_pow = -sum_j eps^(2j) eta_(j+1) / sum_j eps^(2j-2) mu_j``."""
    n = _order(exp, order)
    t = exp.table(eps)
    num = _numerator(exp, eps, n)
    k_exp = ScaledArray(np.asarray(t.volume / (eps**2 * num)), -t.mu.log_scale)
    eta = t.eta.scaled
    k_pow = -float(sum(eps ** (2 * j) * eta[j] for j in range(n + 1))) / num
    return KConstants(k_exp, k_pow, float(k_exp) + k_pow)


def _layer_terms(exp: ExpansionSet, eps: float, s: np.ndarray, tau: np.ndarray,
                 order: int) -> tuple[np.ndarray, np.ndarray]:
    """``chi E sum eps^(2j) Phi_j`` and ``chi E sum_(j>=1) eps^(2j) U_j`` at collar points."""
    if s.size == 0:
        return np.zeros(0), np.zeros(0)
    vals = exp.series()(s)
    th1 = vals[:, -1]
    zeta = tau / eps**2
    col = 0
    phi_sum = np.zeros(s.size)
    for j, p in enumerate(exp.phis):
        d = p.degree + 1
        if j <= order:
            poly = np.polynomial.polynomial.polyval(zeta, vals[:, col:col + d].T, tensor=False)
            phi_sum += eps ** (2 * j) * poly
        col += d
    u_sum = np.zeros(s.size)
    for j, u in enumerate(exp.us, start=1):
        d = u.degree + 1
        if j <= order:
            poly = np.polynomial.polynomial.polyval(zeta, vals[:, col:col + d].T, tensor=False)
            u_sum += eps ** (2 * j) * poly
        col += d
    weight = exp.cutoff(tau) * np.exp(th1 * zeta)
    return weight * phi_sum, weight * u_sum


def _locate_layer(exp: ExpansionSet, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Collar coordinates of the points inside the cutoff support.

    Returns the points array, a mask of points in the support, and ``s``,
    ``tau`` for those points. Points outside the closed domain raise.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    curve = exp.curve
    dist, _ = curve._tree.query(pts)
    # Nearest-sample distance exceeds the true distance by at most ~h^2 kappa.
    near = dist <= exp.cutoff.support + curve.spacing
    outside = ~curve.contains(pts)
    cand = near | outside
    mask = np.zeros(pts.shape[0], dtype=bool)
    s_all = np.zeros(pts.shape[0])
    tau_all = np.zeros(pts.shape[0])
    if np.any(cand):
        s, tau, region = locate_points(curve, pts[cand])
        if np.any(region == Region.EXTERIOR):
            bad = pts[cand][region == Region.EXTERIOR][0]
            raise DomainRangeError(f"point {tuple(bad)} lies outside the closed domain")
        tau = np.maximum(tau, 0.0)
        idx = np.flatnonzero(cand)
        s_all[idx], tau_all[idx] = s, tau
        mask[idx] = tau < exp.cutoff.support
    return pts, mask, s_all[mask], tau_all[mask]


def eigenfunction(exp: ExpansionSet, eps: float, x, order: int | None = None) -> np.ndarray:
    """Truncated principal eigenfunction ``1 - chi E sum eps^(2j) Phi_j``.

    Exactly 1 outside the cutoff support; exactly 0 on the boundary up to
    the accuracy of the projection.
    """
    n = _order(exp, order)
    pts, mask, s, tau = _locate_layer(exp, x)
    out = np.ones(pts.shape[0])
    phi, _ = _layer_terms(exp, eps, s, tau, n)
    out[mask] -= phi
    return out if np.ndim(x) > 1 else out[0]


def mean_exit_time(exp: ExpansionSet, eps: float, x, order: int | None = None) -> np.ndarray:
    """Truncated mean exit time ``K Psi + chi E sum_(j>=1) eps^(2j) U_j``.

    For ``order = 0`` only the leading part ``K Psi`` is available.
    """
    n = _order(exp, order)
    k = k_constants(exp, eps, n).K
    pts, mask, s, tau = _locate_layer(exp, x)
    out = np.full(pts.shape[0], k)
    phi, ul = _layer_terms(exp, eps, s, tau, n)
    out[mask] = k * (1.0 - phi) + ul
    return out if np.ndim(x) > 1 else out[0]


def max_exit_time(exp: ExpansionSet, eps: float, n_angle: int = 64, n_radius: int = 96,
                  order: int | None = None) -> MaxExitTime:
    """``K`` (the maximum up to ``O(eps^2)``) and the grid maximum of the evaluator."""
    curve = exp.curve
    phi = 2 * np.pi * np.arange(n_angle) / n_angle
    frac = np.linspace(0.0, 1.0, n_radius + 1)
    rr = frac[:, None] * curve.boundary_radius(phi)[None, :]
    pts = np.stack([rr * np.cos(phi), rr * np.sin(phi)], -1).reshape(-1, 2)
    u = mean_exit_time(exp, eps, pts, order)
    i = int(np.argmax(u))
    _, tau, region = locate_points(curve, pts[i:i + 1])
    depth = float(tau[0]) if region[0] != Region.DEEP else float(np.inf)
    return MaxExitTime(k_constants(exp, eps, order).K, float(u[i]), pts[i], depth)


def torsional_rigidity(exp: ExpansionSet, eps: float, order: int | None = None) -> float:
    """Layer-moment formula for ``int_Omega u dx``.

    ``K (|Omega| - sum_j eps^(2j+2) int int (1 - eps^2 zeta kappa) Phi_j E)
    + sum_(j>=1) eps^(2j+2) int int (1 - eps^2 zeta kappa) U_j E``.
    """
    n = _order(exp, order)
    curve = exp.curve
    kappa = curve.curvature

    def layer_mass(p: LayerPolynomial) -> float:
        m0 = layer_zeta_moment(p, 0)
        m1 = layer_zeta_moment(p, 1)
        return float(curve.integrate(m0 - eps**2 * kappa * m1))

    phi_part = sum(eps ** (2 * j + 2) * layer_mass(exp.phis[j]) for j in range(n + 1))
    u_part = sum(eps ** (2 * j + 2) * layer_mass(exp.us[j - 1]) for j in range(1, n + 1))
    return k_constants(exp, eps, n).K * (curve.area() - phi_part) + u_part


def integrate_over_domain(exp: ExpansionSet, eps: float, f, rtol: float = 1e-8) -> float:
    """Adaptive polar quadrature of an evaluator, with panel breaks at the cutoff."""
    d = exp.cutoff.delta
    inner = eps ** (2.0 / exp.potential.origin_degree)
    value, _ = adaptive_polar_integral(exp.curve, f, inner, eps**2, rtol,
                                       extra=(d / 3, 2 * d / 3))
    return value


def qsd_normalizer(exp: ExpansionSet, eps: float, order: int | None = None) -> tuple[float, float]:
    """``int exp(-V/eps^2) Psi dx`` and the plain volume integral.

    The first equals the volume integral minus a collar integral of the
    (exponentially small) layer part.
    """
    n = _order(exp, order)
    key = (float(eps), n)
    if key not in exp._qsd_norm:
        curve = exp.curve
        vol = exp.table(eps).volume
        d = exp.cutoff.delta
        rule = collar_rule(curve, exp.cutoff.support, eps**2, extra=(d / 3,))
        tau = rule.tau.ravel()
        idx = rule.index.ravel()
        s = curve.s[idx]
        x = curve.samples[idx] + tau[:, None] * curve.normal[idx]
        phi, _ = _layer_terms(exp, eps, s, tau, n)
        corr = float(np.sum(rule.weights.ravel() * np.exp(-exp.potential.value(x) / eps**2) * phi))
        exp._qsd_norm[key] = (vol - corr, vol)
    return exp._qsd_norm[key]


def qsd_density(exp: ExpansionSet, eps: float, x, order: int | None = None) -> np.ndarray:
    """Quasi-stationary density ``exp(-V/eps^2) Psi / int exp(-V/eps^2) Psi``."""
    norm, _ = qsd_normalizer(exp, eps, order)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.exp(-exp.potential.value(pts) / eps**2) * eigenfunction(exp, eps, pts, order) / norm
    return out if np.ndim(x) > 1 else out[0]


def exit_law_density(exp: ExpansionSet, eps: float, order: int | None = None) -> ExitLaw:
    """Exit-point density on the arc-length grid.

    Proportional to ``exp(-theta0/eps^2) (-eps^-2 theta1 - sum_(j>=1)
    eps^(2j-2) dPhi_j/dzeta(0, s))`` and normalized by
    ``sum_j eps^(2j-2) mu_j``, so it integrates to one exactly.
    """
    n = _order(exp, order)
    tr = exp.traces
    w = np.exp(-(tr.theta[0] - tr.theta_min) / eps**2)
    flux = -tr.theta[1] / eps**2
    for j in range(1, n + 1):
        flux = flux - eps ** (2 * j - 2) * exp.phis[j].zeta_slope
    dens = w * flux / _numerator(exp, eps, n)
    return ExitLaw(exp.curve.s.copy(), dens, bool(np.any(dens < 0)))


def exit_expectation(exp: ExpansionSet, eps: float, f, order: int | None = None) -> float:
    """Expectation of a boundary function (samples on the grid) under the exit law."""
    law = exit_law_density(exp, eps, order)
    f = np.asarray(f, dtype=float)
    if f.shape != law.s.shape:
        raise ValueError(f"boundary samples must have shape {law.s.shape}")
    return float(exp.curve.integrate(f * law.density) / exp.curve.integrate(law.density))
