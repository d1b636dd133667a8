"""Quadrature for the eps-dependent integrals.

Boundary functionals are exponentially small, ``O(exp(-theta_min / eps**2))``.
They are computed in shifted form, i.e. multiplied by
``exp(theta_min / eps**2)``, and carried together with the log of the shift.
Ratios of such quantities never need the shift at all.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError
from .geometry import DomainCurve, FourierSeries, periodic_derivative
from .layer import LayerPolynomial
from .potential import BoundaryTraces, Potential

LOG_MAX = 700.0


@dataclass(frozen=True)
class ScaledArray:
    """Values stored as ``scaled * exp(log_scale)``.

    Attributes
    ----------
    scaled : ndarray
        Power-bounded part.
    log_scale : float
        Common log factor, e.g. ``-theta_min / eps**2``.
    """

    scaled: np.ndarray
    log_scale: float

    @property
    def sign(self) -> np.ndarray:
        return np.sign(self.scaled)

    @property
    def log_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.scaled)) + self.log_scale

    @property
    def values(self) -> np.ndarray:
        """Linear values; NaN where ``|log| >= 700`` (not representable)."""
        if abs(self.log_scale) < LOG_MAX:
            direct = self.scaled * np.exp(self.log_scale)
            if np.all(np.isfinite(direct)):
                return direct
        la = self.log_abs
        ok = np.abs(la) < LOG_MAX
        out = self.sign * np.exp(np.where(ok, la, 0.0))
        return np.where(ok, out, np.where(self.scaled == 0, 0.0, np.nan))

    def __float__(self) -> float:
        return float(np.asarray(self.values).reshape(-1)[0])

    def __len__(self) -> int:
        return len(self.scaled)

    def __getitem__(self, j) -> float:
        return float(self.values[j])

    def as_dict(self) -> dict:
        return {"scaled": np.asarray(self.scaled).tolist(), "log_scale": self.log_scale,
                "sign": np.asarray(self.sign).tolist(), "log_abs": np.asarray(self.log_abs).tolist(),
                "value": np.asarray(self.values).tolist()}


def _shift_weights(traces: BoundaryTraces, eps: float) -> tuple[np.ndarray, float]:
    w = np.exp(-(traces.theta[0] - traces.theta_min) / eps**2)
    return w, -traces.theta_min / eps**2


def mu_table(traces: BoundaryTraces, phis: Sequence[LayerPolynomial], eps: float) -> ScaledArray:
    """Boundary functionals of the eigenfunction layer.

    ``mu_0 = -int exp(-theta0/eps^2) theta1 ds`` and
    ``mu_j = -int exp(-theta0/eps^2) dPhi_j/dzeta(0, s) ds`` for ``j >= 1``,
    by the periodic trapezoid rule.

    Examples
    --------
    Unit disk with ``V = |x|**2 / 2`` at ``eps = 0.5``: ``mu_0 = 2 pi e^-2``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    w, log_scale = _shift_weights(traces, eps)
    h = traces.length / w.size
    rows = [-np.sum(w * traces.theta[1]) * h]
    rows += [-np.sum(w * phi.zeta_slope) * h for phi in phis[1:]]
    return ScaledArray(np.array(rows), log_scale)


def eta_table(traces: BoundaryTraces, us: Sequence[LayerPolynomial], eps: float) -> ScaledArray:
    """Boundary functionals of the exit-time layer, ``eta_1 .. eta_(N+1)``.

    ``eta_j = int exp(-theta0/eps^2) dU_j/dzeta(0, s) ds``; for ``j = 1`` this
    equals ``-int exp(-theta0/eps^2) / theta1 ds``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    w, log_scale = _shift_weights(traces, eps)
    h = traces.length / w.size
    rows = [np.sum(w * u.zeta_slope) * h for u in us]
    return ScaledArray(np.array(rows), log_scale)


def boundary_mass(traces: BoundaryTraces, eps: float) -> ScaledArray:
    """Diagnostic ``int exp(-theta0/eps^2) ds`` (drives no output)."""
    w, log_scale = _shift_weights(traces, eps)
    return ScaledArray(np.array([np.sum(w) * traces.length / w.size]), log_scale)


# Two-dimensional quadrature on star-shaped domains.

@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a planar quadrature rule."""

    points: np.ndarray
    weights: np.ndarray

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.points)))


def _panel_breaks(rho: float, inner: float, edge: float, extra: Sequence[float],
                  max_width: float) -> np.ndarray:
    pts = [0.0, rho]
    h = inner / 8
    while h < rho:
        pts.append(h)
        h *= 2
    e = edge / 16
    while e < rho:
        pts.append(rho - e)
        e *= 2
    pts += [rho - d for d in extra if 0 < d < rho]
    pts = np.unique(np.clip(pts, 0.0, rho))
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a < 1e-12 * rho:
            continue
        n = int(np.ceil((b - a) / max_width))
        out += list(a + (b - a) * np.arange(1, n + 1) / n)
    return np.asarray(out)


def polar_rule(curve: DomainCurve, inner: float, edge: float, n_angle: int = 128,
               n_gl: int = 8, extra: Sequence[float] = (), max_width: float = 0.1) -> QuadratureRule:
    """Polar tensor rule on the (star-shaped) domain.

    Parameters
    ----------
    curve : DomainCurve
    inner : float
        Length scale of the mass concentrated at the origin; radial panels
        are graded geometrically from ``inner / 8``.
    edge : float
        Boundary-layer width; panels are graded geometrically toward the
        boundary from ``edge / 16``.
    n_angle : int
        Periodic trapezoid nodes in the polar angle.
    n_gl : int
        Gauss-Legendre nodes per radial panel.
    extra : sequence of float
        Additional panel breaks, as distances from the boundary along the ray.
    max_width : float
        Largest radial panel width.
    """
    x, w = np.polynomial.legendre.leggauss(n_gl)
    phi = 2 * np.pi * np.arange(n_angle) / n_angle
    rho = curve.boundary_radius(phi)
    pts, wts = [], []
    for p, r in zip(phi, rho):
        br = _panel_breaks(float(r), inner, edge, extra, max_width)
        a, b = br[:-1, None], br[1:, None]
        rr = (0.5 * (b - a) * x[None] + 0.5 * (a + b)).ravel()
        ww = (0.5 * (b - a) * w[None]).ravel() * rr
        pts.append(np.stack([rr * np.cos(p), rr * np.sin(p)], -1))
        wts.append(ww * (2 * np.pi / n_angle))
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts))


def adaptive_polar_integral(curve: DomainCurve, f: Callable[[np.ndarray], np.ndarray],
                            inner: float, edge: float, rtol: float = 1e-8,
                            extra: Sequence[float] = (), n_angle: int = 64, n_gl: int = 6,
                            max_angle: int = 4096) -> tuple[float, dict]:
    """Integrate ``f`` over the domain, doubling resolution until converged.

    Returns
    -------
    value : float
    info : dict
        Final resolution and the last relative change.

    Raises
    ------
    NumericalError
        When ``max_angle`` is reached without meeting ``rtol``.
    """
    prev = polar_rule(curve, inner, edge, n_angle, n_gl, extra,
                      max_width=6.4 / n_angle).integrate(f)
    history = []
    while n_angle < max_angle:
        n_angle *= 2
        n_gl += 2
        cur = polar_rule(curve, inner, edge, n_angle, n_gl, extra,
                         max_width=6.4 / n_angle).integrate(f)
        change = abs(cur - prev) / max(abs(cur), 1e-300)
        history.append(change)
        if change < rtol:
            return cur, {"n_angle": n_angle, "n_gl": n_gl, "rel_change": change}
        prev = cur
    raise NumericalError(f"polar quadrature did not reach rtol={rtol:g}; "
                         f"relative changes {['%.2e' % h for h in history]}")


def _scales(potential: Potential, eps: float) -> tuple[float, float]:
    return eps ** (2.0 / potential.origin_degree), eps ** 2


def volume_integral(potential: Potential, curve: DomainCurve, eps: float,
                    rtol: float = 1e-8) -> float:
    """``int_Omega exp(-V / eps**2) dx`` by adaptive polar quadrature.

    Examples
    --------
    Unit disk, ``V = |x|**2 / 2``: ``2 pi eps**2 (1 - exp(-1 / (2 eps**2)))``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    inner, edge = _scales(potential, eps)
    value, _ = adaptive_polar_integral(
        curve, lambda x: np.exp(-potential.value(x) / eps**2), inner, edge, rtol)
    return value


@dataclass(frozen=True)
class CollarRule:
    """Tensor rule in collar coordinates, trapezoid in s and Gauss-Legendre in depth.

    ``weights`` include the area element ``1 - tau * kappa``; all arrays have
    shape (n_tau, M).
    """

    tau: np.ndarray
    index: np.ndarray
    weights: np.ndarray


def collar_rule(curve: DomainCurve, depth: float, edge: float,
                extra: Sequence[float] = (), n_gl: int = 10) -> CollarRule:
    """Quadrature on ``{0 <= tau <= depth}`` graded toward the boundary."""
    br = {0.0, depth}
    e = edge / 16
    while e < depth:
        br.add(e)
        e *= 2
    br.update(t for t in extra if 0 < t < depth)
    br = np.array(sorted(br))
    fine = [br[0]]
    for a, b in zip(br[:-1], br[1:]):
        n = int(np.ceil((b - a) / max(edge, 1e-3)))
        fine += list(a + (b - a) * np.arange(1, n + 1) / n)
    br = np.asarray(fine)
    x, w = np.polynomial.legendre.leggauss(n_gl)
    a, b = br[:-1, None], br[1:, None]
    tau = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    m = curve.grid_size
    weights = wt[:, None] * (1 - tau[:, None] * curve.curvature[None, :]) * curve.spacing
    index = np.broadcast_to(np.arange(m)[None, :], (tau.size, m))
    return CollarRule(np.broadcast_to(tau[:, None], (tau.size, m)), index, weights)


def alpha_leading(potential: Potential, n_angle: int = 2048) -> tuple[float, float]:
    """Whole-plane integrals of the origin forms.

    ``alpha_n = int exp(-V0) dx`` and ``alpha_(n+1) = int V1 exp(-V0) dx``.
    Writing ``V0 = r**k v(phi)`` and ``V1 = r**(k+1) w(phi)``, the radial
    integrals are ``Gamma(2/k) / (k v**(2/k))`` and
    ``w Gamma(3/k) / (k v**(3/k))``; the angle is integrated by the periodic
    trapezoid rule.
    """
    k = potential.origin_degree
    v0, v1 = potential.origin_forms
    phi = 2 * np.pi * np.arange(n_angle) / n_angle
    e = np.stack([np.cos(phi), np.sin(phi)], -1)
    v, w = v0(e), v1(e)
    h = 2 * np.pi / n_angle
    a_n = float(np.sum(gamma(2 / k) / (k * v ** (2 / k))) * h)
    a_n1 = float(np.sum(w * gamma(3 / k) / (k * v ** (3 / k))) * h)
    return a_n, a_n1


@dataclass(frozen=True)
class LaplaceDiagnostic:
    """Leading Laplace approximation of ``mu_0`` (diagnostic only).

    ``value`` is ``scaled * exp(log_scale)`` or ``None`` when declined.
    """

    kind: str
    scaled: float | None
    log_scale: float
    minima: tuple = ()
    reason: str = ""

    @property
    def value(self) -> float | None:
        if self.scaled is None or abs(self.log_scale) >= LOG_MAX:
            return None
        return self.scaled * float(np.exp(self.log_scale))


def laplace_leading_mu(traces: BoundaryTraces, eps: float) -> LaplaceDiagnostic:
    """Laplace-method leading term of ``mu_0``.

    For constant ``theta0`` the integral is exact: ``int -theta1 ds *
    exp(-theta_min/eps^2)``. For isolated nondegenerate minima ``s*`` each
    contributes ``-theta1(s*) sqrt(2 pi eps^2 / theta0''(s*))``. Degenerate
    minima are declined.
    """
    th0, th1 = traces.theta[0], traces.theta[1]
    length, m = traces.length, th0.size
    log_scale = -traces.theta_min / eps**2
    scale = max(1.0, float(np.max(np.abs(th0))))
    if np.ptp(th0) <= 1e-12 * scale:
        return LaplaceDiagnostic("constant", float(-np.sum(th1) * length / m), log_scale)
    d2 = periodic_derivative(th0, length, 2)
    ser = FourierSeries(np.vstack([th0, periodic_derivative(th0, length, 1), d2, th1]), length)
    cand = np.flatnonzero((th0 <= np.roll(th0, 1)) & (th0 <= np.roll(th0, -1)))
    found = []
    for c in cand:
        s = c * length / m
        for _ in range(50):
            _, f1, f2, _ = ser(s)
            if f2 <= 0:
                break
            step = f1 / f2
            s -= step
            if abs(step) < 1e-14 * length:
                break
        v0, _, f2, t1 = ser(s)
        found.append((float(np.mod(s, length)), float(v0), float(f2), float(t1)))
    tmin = min(f[1] for f in found)
    glob = [f for f in found if f[1] - tmin <= 1e-10 * scale]
    uniq = []
    for f in glob:
        if all(min(abs(f[0] - g[0]), length - abs(f[0] - g[0])) > 1e-8 * length for g in uniq):
            uniq.append(f)
    if any(f[2] <= 1e-8 * scale for f in uniq):
        return LaplaceDiagnostic("declined", None, log_scale, tuple(uniq),
                                 "degenerate minimum of the boundary trace; the leading "
                                 "power of eps is not determined by second derivatives")
    scaled = sum(-f[3] * np.sqrt(2 * np.pi * eps**2 / f[2]) * np.exp(-(f[1] - traces.theta_min) / eps**2)
                 for f in uniq)
    return LaplaceDiagnostic("nondegenerate", float(scaled), log_scale, tuple(uniq))


@dataclass(frozen=True)
class IntegralTable:
    """All eps-dependent integrals needed for assembly at one ``eps``.

    Attributes
    ----------
    eps : float
    mu : ScaledArray
        ``mu_0 .. mu_N``.
    eta : ScaledArray
        ``eta_1 .. eta_(N+1)``.
    volume : float
        ``int_Omega exp(-V/eps^2) dx``.
    alpha_lead : tuple of float
        Whole-plane ``(alpha_n, alpha_(n+1))``.
    """

    eps: float
    mu: ScaledArray
    eta: ScaledArray
    volume: float
    alpha_lead: tuple

    def as_dict(self) -> dict:
        return {"eps": self.eps, "mu": self.mu.as_dict(), "eta": self.eta.as_dict(),
                "volume": self.volume, "alpha_lead": list(self.alpha_lead)}


def integral_table(potential: Potential, curve: DomainCurve, traces: BoundaryTraces,
                   phis: Sequence[LayerPolynomial], us: Sequence[LayerPolynomial],
                   eps: float, rtol: float = 1e-8) -> IntegralTable:
    """Compute ``mu``, ``eta``, the volume integral and the alpha data at ``eps``."""
    table = IntegralTable(eps=float(eps), mu=mu_table(traces, phis, eps),
                          eta=eta_table(traces, us, eps),
                          volume=volume_integral(potential, curve, eps, rtol),
                          alpha_lead=alpha_leading(potential))
    if not table.mu.scaled[0] > 0:
        raise NumericalError(f"mu_0 must be positive, got {table.mu.scaled[0]!r}")
    if not np.all(np.isfinite(table.mu.scaled)) or not np.all(np.isfinite(table.eta.scaled)):
        raise NumericalError("non-finite boundary functional")
    if not table.volume > 0:
        raise NumericalError("volume integral must be positive")
    return table
