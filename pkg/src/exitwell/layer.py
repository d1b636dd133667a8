"""Boundary-layer recurrences in the stretched depth ``zeta = tau / eps**2``.

A layer function is stored as ``(sum_m c_m(s) zeta**m) * exp(theta1(s) zeta)``
with the coefficients ``c_m`` sampled on the arc-length grid. Two sequences are
built:

- the eigenfunction layer ``Phi_0 = 1, Phi_1, ...`` with boundary values
  ``1, 0, 0, ...``;
- the exit-time layer ``U_1, U_2, ...`` with zero boundary values.

Each term solves ``-P'' + theta1 P' = G`` in ``zeta`` with decay at infinity.
The right-hand sides are produced by the operator family ``L_i``: the
coefficient of ``eps**(2i)`` when the generator, written in collar coordinates
and stretched depth, is expanded in powers of ``eps**2``. With ``E = exp(theta1
zeta)`` and ``D`` the twisted tangential derivative ``D(w) = w_s + zeta
theta1_s w`` (so that ``d/ds (w E) = D(w) E``) it reads

    L_i P = zeta^(i-1) d/ds(ell_(i-1) dP/ds)
            - ((i+2) zeta^(i+1) theta_(i+2) - (i+1) zeta^i Theta_(i+1)) dP/dzeta
            - sum_q ell_q (zeta^i theta'_(i-q) - zeta^(i-1) Theta'_(i-q-1)) dP/ds

with ``theta_j`` the depth Taylor coefficients of V, ``Theta_j`` those of the
log Jacobian, ``ell_j`` those of the inverse squared Jacobian, and terms with
a negative index omitted.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import AssumptionError
from .geometry import FourierSeries, MetricTaylor, periodic_derivative
from .potential import BoundaryTraces


@dataclass(frozen=True, eq=False)
class LayerPolynomial:
    """Polynomial-times-exponential layer function on the arc-length grid.

    Attributes
    ----------
    coeffs : ndarray, shape (d + 1, M)
        ``coeffs[m]`` is the coefficient of ``zeta**m``.
    theta1 : ndarray, shape (M,)
        Exponential rate; the layer function is ``poly * exp(theta1 * zeta)``.
    length : float
        Period of the arc-length grid.
    """

    coeffs: np.ndarray
    theta1: np.ndarray
    length: float

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def boundary_value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def zeta_slope(self) -> np.ndarray:
        """Derivative of the polynomial factor at ``zeta = 0``."""
        return self.coeffs[1] if self.degree >= 1 else np.zeros_like(self.theta1)

    def poly(self, zeta, index=slice(None)) -> np.ndarray:
        """Polynomial factor at ``zeta`` on grid points ``index`` (broadcasting)."""
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros(np.broadcast(zeta, self.coeffs[0][index]).shape)
        for c in self.coeffs[::-1]:
            out = out * zeta + c[index]
        return out

    def value(self, zeta, index=slice(None)) -> np.ndarray:
        """Full layer function ``poly * exp(theta1 zeta)`` on grid points."""
        zeta = np.asarray(zeta, dtype=float)
        return self.poly(zeta, index) * np.exp(self.theta1[index] * zeta)

    def interpolated(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients and rate at arbitrary arc lengths.

        Returns
        -------
        coeffs : ndarray, shape (len(s), d + 1)
        theta1 : ndarray, shape (len(s),)
        """
        ser = FourierSeries(np.vstack([self.coeffs, self.theta1[None]]), self.length)
        out = ser(np.mod(np.asarray(s, dtype=float), self.length))
        return out[..., :-1], out[..., -1]


# Coefficient-array helpers; arrays have shape (degree + 1, M).

def _pad(a: np.ndarray, rows: int) -> np.ndarray:
    if a.shape[0] >= rows:
        return a
    return np.vstack([a, np.zeros((rows - a.shape[0], a.shape[1]))])


def _add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(a.shape[0], b.shape[0])
    return _pad(a, n) + _pad(b, n)


def _shift(a: np.ndarray, k: int) -> np.ndarray:
    """Multiply by ``zeta**k`` (k >= 0)."""
    return np.vstack([np.zeros((k, a.shape[1])), a]) if k else a


def _dzeta(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 1:
        return np.zeros_like(a)
    m = np.arange(1, a.shape[0])[:, None]
    return m * a[1:]


@dataclass(frozen=True, eq=False)
class LayerOperatorData:
    """Grid arrays entering the operators ``L_i``.

    Attributes
    ----------
    theta, theta_s : ndarray, shape (J + 1, M)
        Depth Taylor coefficients of V and their s-derivatives.
    big, big_s : ndarray, shape (J + 1, M)
        Same for the log Jacobian.
    ell : ndarray, shape (J + 1, M)
        Taylor coefficients of the inverse squared Jacobian.
    length : float
    """

    theta: np.ndarray
    theta_s: np.ndarray
    big: np.ndarray
    big_s: np.ndarray
    ell: np.ndarray
    length: float

    @property
    def order(self) -> int:
        return min(self.theta.shape[0], self.big.shape[0]) - 1

    @property
    def theta1(self) -> np.ndarray:
        return self.theta[1]

    def twisted_ds(self, w: np.ndarray) -> np.ndarray:
        """``D(w) = dw/ds + zeta * theta1_s * w``, raising the degree by one."""
        return _add(periodic_derivative(w, self.length), _shift(self.theta_s[1] * w, 1))


def layer_operator_data(metric: MetricTaylor, traces: BoundaryTraces) -> LayerOperatorData:
    """Collect Taylor arrays and their spectral tangential derivatives."""
    j = min(metric.order, traces.order)
    theta = traces.theta[:j + 1]
    big = metric.theta_big[:j + 1]
    return LayerOperatorData(
        theta=theta, theta_s=periodic_derivative(theta, traces.length),
        big=big, big_s=periodic_derivative(big, traces.length),
        ell=metric.ell[:j + 1], length=traces.length)


def apply_layer_operator(i: int, p: LayerPolynomial | np.ndarray,
                         data: LayerOperatorData) -> LayerPolynomial:
    """Apply ``L_i`` to a layer function.

    Parameters
    ----------
    i : int
        Operator order (>= 0).
    p : LayerPolynomial or ndarray
        Input layer function (or its coefficient array).
    data : LayerOperatorData

    Returns
    -------
    LayerPolynomial
        Of degree ``deg p + i + 1``.

    Raises
    ------
    ValueError
        When Taylor data of order ``i + 2`` is not available.
    """
    if i < 0:
        raise ValueError("operator order must be non-negative")
    if i + 2 > data.order:
        raise ValueError(f"operator L_{i} needs Taylor data to order {i + 2}, "
                         f"only {data.order} available")
    c = p.coeffs if isinstance(p, LayerPolynomial) else np.asarray(p, dtype=float)
    th1 = data.theta1
    dp = data.twisted_ds(c)
    dz = _add(_dzeta(c), th1 * c)

    out = -(i + 2) * data.theta[i + 2] * _shift(dz, i + 1)
    out = _add(out, (i + 1) * data.big[i + 1] * _shift(dz, i))
    for q in range(i + 1):
        out = _add(out, -data.ell[q] * data.theta_s[i - q] * _shift(dp, i))
        if i - q - 1 >= 0:
            out = _add(out, data.ell[q] * data.big_s[i - q - 1] * _shift(dp, i - 1))
    if i >= 1:
        out = _add(out, _shift(data.twisted_ds(data.ell[i - 1] * dp), i - 1))
    return LayerPolynomial(out, th1, data.length)


def solve_layer_ode(theta1: np.ndarray, rhs: LayerPolynomial | np.ndarray,
                    boundary_value: float, length: float | None = None) -> LayerPolynomial:
    """Decaying solution of ``-P'' + theta1 P' = G`` with ``P(0) = boundary_value``.

    With ``P = p E`` and ``G = g E`` the equation becomes ``-p'' - theta1 p' = g``,
    whose polynomial solution is obtained from the top coefficient down:
    ``p_(m+1) = -(g_m + (m+2)(m+1) p_(m+2)) / (theta1 (m+1))``.

    Parameters
    ----------
    theta1 : ndarray, shape (M,)
        Strictly negative rate.
    rhs : LayerPolynomial or ndarray, shape (d + 1, M)
    boundary_value : float
    length : float, optional
        Grid period; taken from ``rhs`` when it is a LayerPolynomial.

    Returns
    -------
    LayerPolynomial
        Of degree ``d + 1``.

    Raises
    ------
    AssumptionError
        If ``theta1`` is not strictly negative (no decaying solution).
    """
    theta1 = np.asarray(theta1, dtype=float)
    if np.any(theta1 >= 0):
        raise AssumptionError("inward-decrease",
                              "layer equation needs theta1 < 0 for a decaying solution")
    if isinstance(rhs, LayerPolynomial):
        g, length = rhs.coeffs, rhs.length if length is None else length
    else:
        g = np.atleast_2d(np.asarray(rhs, dtype=float))
    d = g.shape[0] - 1
    p = np.zeros((d + 3, theta1.size))
    for m in range(d, -1, -1):
        p[m + 1] = -(g[m] + (m + 2) * (m + 1) * p[m + 2]) / (theta1 * (m + 1))
    p[0] = boundary_value
    return LayerPolynomial(p[:d + 2], theta1, float(length if length is not None else 2 * np.pi))


def _check_degree(name: str, lp: LayerPolynomial, bound: int) -> None:
    if lp.degree > bound:
        extra = np.max(np.abs(lp.coeffs[bound + 1:]))
        raise ArithmeticError(f"{name} has formal degree {lp.degree} > {bound} "
                              f"(excess coefficients up to {extra:.3g})")


def phi_sequence(order: int, data: LayerOperatorData) -> list[LayerPolynomial]:
    """Eigenfunction layer terms ``Phi_0 .. Phi_N``.

    ``Phi_0 = 1`` and ``Phi_j`` solves the layer equation with right side
    ``sum_(i<j) L_i Q_(j-i-1)`` and zero boundary value.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    th1 = data.theta1
    if np.any(th1 >= 0):
        raise AssumptionError("inward-decrease", "theta1 must be negative on the boundary")
    phis = [LayerPolynomial(np.ones((1, th1.size)), th1, data.length)]
    for j in range(1, order + 1):
        g = np.zeros((1, th1.size))
        for i in range(j):
            g = _add(g, apply_layer_operator(i, phis[j - i - 1], data).coeffs)
        phi = solve_layer_ode(th1, g, 0.0, data.length)
        _check_degree(f"Phi_{j}", phi, 2 * j)
        phis.append(phi)
    return phis


def u_sequence(order: int, phis: list[LayerPolynomial],
               data: LayerOperatorData) -> list[LayerPolynomial]:
    """Exit-time layer terms ``U_1 .. U_N``.

    ``U_j`` solves the layer equation with right side
    ``Q_(j-1) + sum_(i <= j-2) L_i P_(j-i-1)`` and zero boundary value.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    if len(phis) < order:
        raise ValueError(f"need Phi_0..Phi_{order - 1}, got {len(phis)} terms")
    th1 = data.theta1
    us: list[LayerPolynomial] = []
    for j in range(1, order + 1):
        f = phis[j - 1].coeffs
        for i in range(j - 1):
            f = _add(f, apply_layer_operator(i, us[j - i - 2], data).coeffs)
        u = solve_layer_ode(th1, f, 0.0, data.length)
        _check_degree(f"U_{j}", u, 2 * j - 1)
        us.append(u)
    return us


def layer_residual(p: LayerPolynomial, rhs: LayerPolynomial | np.ndarray,
                   zeta, index) -> np.ndarray:
    """Residual ``-P'' + theta1 P' - G`` at grid points ``index`` and depths ``zeta``."""
    g = rhs.coeffs if isinstance(rhs, LayerPolynomial) else np.asarray(rhs, dtype=float)
    c = p.coeffs
    d1 = _dzeta(c)
    d2 = _dzeta(d1)
    th = p.theta1[index]
    zeta = np.asarray(zeta, dtype=float)

    def ev(a):
        out = np.zeros(np.broadcast(zeta, a[0][index]).shape)
        for row in a[::-1]:
            out = out * zeta + row[index]
        return out
    # P' = (p' + th p) E, P'' = (p'' + 2 th p' + th^2 p) E
    pp, p1, p2 = ev(c), ev(d1), ev(d2)
    lhs = -(p2 + 2 * th * p1 + th**2 * pp) + th * (p1 + th * pp)
    return (lhs - ev(g)) * np.exp(th * zeta)


def layer_zeta_moment(p: LayerPolynomial, weight_degree: int) -> np.ndarray:
    """``int_0^inf zeta**r * poly(zeta) * exp(theta1 zeta) dzeta`` per grid point.

    Uses ``int_0^inf zeta**n exp(-a zeta) dzeta = n! / a**(n + 1)`` with
    ``a = -theta1``.
    """
    a = -p.theta1
    if np.any(a <= 0):
        raise AssumptionError("inward-decrease", "moments need theta1 < 0")
    r = int(weight_degree)
    out = np.zeros_like(a)
    for m, c in enumerate(p.coeffs):
        out = out + c * factorial(m + r) / a**(m + r + 1)
    return out
