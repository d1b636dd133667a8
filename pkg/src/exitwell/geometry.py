"""Planar boundary curves, collar coordinates and metric Taylor data.

A boundary is stored as samples on a uniform arc-length grid whose size is a
power of two. Quantities between grid points come from the trigonometric
interpolant, so differentiation and quadrature along the boundary are
spectrally accurate for smooth curves.

Coordinates near the boundary are ``x = x(s) + tau * nu(s)`` with ``s`` the arc
length, ``nu`` the inward unit normal and ``tau >= 0`` the depth. Curvature is
taken positive for convex boundaries, so the unit circle has ``kappa = 1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .errors import CollarError, ConfigError, DomainRangeError

DIM = 2
DEFAULT_GRID = 256
DEFAULT_COLLAR_CAP = 0.5

_CHUNK = 2048


def _angular_wavenumbers(m: int, length: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(m, d=1.0 / m) / length


def periodic_derivative(values, length: float, order: int = 1) -> np.ndarray:
    """Spectral derivative of periodic samples along the last axis.

    Parameters
    ----------
    values : array_like, shape (..., M)
        Samples on a uniform grid covering one period.
    length : float
        Period.
    order : int
        Derivative order (>= 0).

    Returns
    -------
    ndarray
        Real derivative samples of the same shape. For odd orders the Nyquist
        mode is discarded, as usual for real data.
    """
    values = np.asarray(values, dtype=float)
    if order == 0:
        return values.copy()
    m = values.shape[-1]
    k = _angular_wavenumbers(m, length)
    mult = (1j * k) ** order
    if m % 2 == 0 and order % 2 == 1:
        mult[m // 2] = 0.0
    return np.real(np.fft.ifft(np.fft.fft(values, axis=-1) * mult, axis=-1))


def periodic_integral(values, length: float) -> np.ndarray:
    """Periodic trapezoid rule along the last axis."""
    values = np.asarray(values, dtype=float)
    return values.sum(axis=-1) * (length / values.shape[-1])


class FourierSeries:
    """Trigonometric interpolant of periodic samples.

    Parameters
    ----------
    values : array_like, shape (M,) or (nv, M)
        Samples on the uniform grid ``s_m = m * length / M``.
    length : float
        Period.
    """

    def __init__(self, values, length: float):
        values = np.asarray(values, dtype=float)
        self._scalar = values.ndim == 1
        self.values = np.atleast_2d(values)
        self.length = float(length)
        m = self.values.shape[-1]
        self.k = _angular_wavenumbers(m, length)
        self.coef = np.fft.fft(self.values, axis=-1) / m
        self._nyquist = m // 2 if m % 2 == 0 else None

    def __call__(self, s, deriv: int = 0) -> np.ndarray:
        """Evaluate the interpolant (or a derivative) at arbitrary ``s``.

        Returns an array of shape ``s.shape`` for scalar series and
        ``s.shape + (nv,)`` otherwise.
        """
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        mult = (1j * self.k) ** deriv
        if deriv % 2 == 1 and self._nyquist is not None:
            mult = mult.copy()
            mult[self._nyquist] = 0.0
        coef = (self.coef * mult).T
        out = np.empty((flat.size, self.values.shape[0]))
        for start in range(0, flat.size, _CHUNK):
            chunk = flat[start:start + _CHUNK]
            phase = np.exp(1j * np.outer(chunk, self.k))
            out[start:start + _CHUNK] = np.real(phase @ coef)
        if self._scalar:
            return out[:, 0].reshape(s.shape)
        return out.reshape(s.shape + (self.values.shape[0],))


# Native parameterizations t -> (x, x', x'') on [0, 2*pi), counterclockwise.

def _circle_native(radius: float):
    def f(t):
        c, s = np.cos(t), np.sin(t)
        x = radius * np.stack([c, s], -1)
        dx = radius * np.stack([-s, c], -1)
        return x, dx, -x
    return f


def _ellipse_native(a: float, b: float):
    def f(t):
        c, s = np.cos(t), np.sin(t)
        x = np.stack([a * c, b * s], -1)
        dx = np.stack([-a * s, b * c], -1)
        return x, dx, -x
    return f


def _star_radius(c0: float, cos_coef, sin_coef):
    cos_coef = np.asarray(cos_coef, dtype=float)
    sin_coef = np.asarray(sin_coef, dtype=float)
    n = max(cos_coef.size, sin_coef.size)
    a = np.zeros(n)
    b = np.zeros(n)
    a[:cos_coef.size] = cos_coef
    b[:sin_coef.size] = sin_coef
    modes = np.arange(1, n + 1)

    def rho(t, deriv: int = 0):
        t = np.asarray(t, dtype=float)
        mt = np.multiply.outer(t, modes)
        c, s = np.cos(mt), np.sin(mt)
        if deriv == 0:
            return c0 + c @ a + s @ b
        if deriv == 1:
            return (-s * modes) @ a + (c * modes) @ b
        return (-c * modes**2) @ a + (-s * modes**2) @ b
    return rho


def _star_native(rho):
    def f(t):
        r, dr, ddr = rho(t), rho(t, 1), rho(t, 2)
        c, s = np.cos(t), np.sin(t)
        x = np.stack([r * c, r * s], -1)
        dx = np.stack([dr * c - r * s, dr * s + r * c], -1)
        ddx = np.stack([ddr * c - 2 * dr * s - r * c,
                        ddr * s + 2 * dr * c - r * s], -1)
        return x, dx, ddx
    return f


@dataclass(frozen=True, eq=False)
class DomainCurve:
    """Smooth closed boundary sampled on a uniform arc-length grid.

    Attributes
    ----------
    s : ndarray, shape (M,)
        Arc-length grid ``s_m = m * length / M``.
    samples : ndarray, shape (M, 2)
        Boundary points x(s_m), counterclockwise.
    tangent, normal : ndarray, shape (M, 2)
        Unit tangent dx/ds and inward unit normal.
    curvature : ndarray, shape (M,)
        Signed curvature, positive where the boundary bends toward the inside.
    length : float
        Perimeter.
    collar_depth : float
        Depth up to which collar coordinates are used.
    kind : str
        Descriptor kind (circle, ellipse or fourier_star).
    params : dict
        Descriptor parameters as given.
    """

    s: np.ndarray
    samples: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    length: float
    collar_depth: float
    kind: str
    params: dict
    radius_fn: Callable = field(repr=False)
    _series: FourierSeries = field(repr=False)
    _kappa_series: FourierSeries = field(repr=False)
    _tree: cKDTree = field(repr=False)

    dim = DIM

    @property
    def grid_size(self) -> int:
        return self.s.size

    @property
    def spacing(self) -> float:
        return self.length / self.s.size

    def point_at(self, s, deriv: int = 0) -> np.ndarray:
        """Boundary point x(s) (or its ``deriv``-th s-derivative)."""
        return self._series(np.mod(s, self.length), deriv)

    def tangent_at(self, s) -> np.ndarray:
        d = self.point_at(s, 1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal_at(self, s) -> np.ndarray:
        t = self.tangent_at(s)
        return np.stack([-t[..., 1], t[..., 0]], -1)

    def curvature_at(self, s) -> np.ndarray:
        return self._kappa_series(np.mod(s, self.length))

    def interpolate(self, values, s) -> np.ndarray:
        """Trigonometric interpolation of grid arrays (last axis) to ``s``."""
        return FourierSeries(values, self.length)(np.mod(s, self.length))

    def derivative(self, values, order: int = 1) -> np.ndarray:
        """Spectral s-derivative of grid arrays along the last axis."""
        return periodic_derivative(values, self.length, order)

    def integrate(self, values) -> np.ndarray:
        """Periodic trapezoid integral over the boundary (last axis)."""
        return periodic_integral(values, self.length)

    def area(self) -> float:
        """Enclosed area by Green's theorem, 1/2 * closed integral of x dy - y dx."""
        x, t = self.samples, self.tangent
        return float(0.5 * self.integrate(x[:, 0] * t[:, 1] - x[:, 1] * t[:, 0]))

    def contains(self, points) -> np.ndarray:
        """Exact membership test in the closed domain (star-shaped about 0)."""
        p = np.asarray(points, dtype=float)
        r = np.hypot(p[..., 0], p[..., 1])
        return r <= self.radius_fn(np.arctan2(p[..., 1], p[..., 0]))

    def boundary_radius(self, phi) -> np.ndarray:
        """Distance from the origin to the boundary along polar angle ``phi``."""
        return self.radius_fn(np.asarray(phi, dtype=float))


def _native_for(kind: str, params: Mapping):
    try:
        if kind == "circle":
            radius = float(params.get("radius", 1.0))
            if radius <= 0:
                raise ConfigError("circle radius must be positive")
            return _circle_native(radius), lambda phi: np.full_like(phi, radius, dtype=float)
        if kind == "ellipse":
            a, b = float(params["a"]), float(params["b"])
            if a <= 0 or b <= 0:
                raise ConfigError("ellipse semi-axes must be positive")

            def rad(phi):
                return a * b / np.sqrt((b * np.cos(phi))**2 + (a * np.sin(phi))**2)
            return _ellipse_native(a, b), rad
        if kind == "fourier_star":
            rho = _star_radius(float(params["mean_radius"]),
                               params.get("cos", []), params.get("sin", []))
            tt = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
            if np.min(rho(tt)) <= 0:
                raise CollarError("star radius function must stay positive: the curve "
                                  "would exclude the origin or self-intersect")
            return _star_native(rho), lambda phi: rho(phi)
    except KeyError as exc:
        raise ConfigError(f"curve kind {kind!r} is missing parameter {exc.args[0]!r}") from None
    raise ConfigError(f"unknown curve kind {kind!r}; expected circle, ellipse or fourier_star")


def build_curve(desc: Mapping) -> DomainCurve:
    """Build an arc-length sampled boundary from a descriptor.

    Parameters
    ----------
    desc : mapping
        ``kind`` is ``"circle"`` (``radius``), ``"ellipse"`` (``a``, ``b``)
        or ``"fourier_star"`` (``mean_radius``, ``cos``, ``sin`` lists giving
        the polar radius ``r(t) = mean_radius + sum a_m cos(mt) + b_m sin(mt)``).
        Optional ``grid_size`` (power of two, default 256) and
        ``collar_cap`` (default 0.5).

    Returns
    -------
    DomainCurve

    Raises
    ------
    ConfigError
        Unknown kind, missing parameters or a grid size that is not a power of two.
    CollarError
        Degenerate curve or an injectivity failure of the collar map.

    Examples
    --------
    >>> c = build_curve({"kind": "circle", "radius": 1.0})
    >>> round(c.length, 12) == round(2 * np.pi, 12)
    True
    """
    kind = str(desc.get("kind", ""))
    params = {k: v for k, v in desc.items() if k not in ("kind", "grid_size", "collar_cap")}
    m = int(desc.get("grid_size", DEFAULT_GRID))
    if m < 16 or m & (m - 1):
        raise ConfigError(f"grid_size must be a power of two >= 16, got {m}")
    cap = float(desc.get("collar_cap", DEFAULT_COLLAR_CAP))
    if cap <= 0:
        raise ConfigError("collar_cap must be positive")
    native, radius_fn = _native_for(kind, params)

    # Cumulative arc length s(t) from the Fourier series of the speed.
    nt = max(8 * m, 2048)
    tt = 2 * np.pi * np.arange(nt) / nt
    _, dx, _ = native(tt)
    speed = np.linalg.norm(dx, axis=-1)
    sp_hat = np.fft.fft(speed) / nt
    kt = np.fft.fftfreq(nt, d=1.0 / nt)
    length = float(2 * np.pi * sp_hat[0].real)
    if not np.isfinite(length) or length <= 0:
        raise CollarError("degenerate curve with non-positive length")
    nz = kt != 0
    anti = np.zeros(nt, dtype=complex)
    anti[nz] = sp_hat[nz] / (1j * kt[nz])

    def arclength(t):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.outer(t, kt))
        return sp_hat[0].real * t + np.real(ph @ anti - anti.sum())

    target = length * np.arange(m) / m
    t = 2 * np.pi * target / length
    for _ in range(50):
        _, d1, _ = native(t)
        step = (arclength(t) - target) / np.linalg.norm(d1, axis=-1)
        t = t - step
        # Newton is quadratic: one step past 1e-10 lands at round-off level
        if np.max(np.abs(step)) < 1e-10:
            break

    x, d1, d2 = native(t)
    sp = np.linalg.norm(d1, axis=-1)
    tangent = d1 / sp[:, None]
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], -1)
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sp**3
    signed_area = 0.5 * np.sum(x[:, 0] * tangent[:, 1] - x[:, 1] * tangent[:, 0]) * length / m
    if signed_area <= 0:
        raise CollarError("curve must be counterclockwise and enclose the origin")

    tt_dense = np.linspace(0, 2 * np.pi, 8 * m, endpoint=False)
    xd, d1d, d2d = native(tt_dense)
    kd = (d1d[:, 0] * d2d[:, 1] - d1d[:, 1] * d2d[:, 0]) / np.linalg.norm(d1d, axis=-1)**3
    kmax = float(np.max(np.abs(kd)))
    tau0 = min(0.5 / kmax, cap) if kmax > 0 else cap
    if tau0 * kmax >= 1.0:
        raise CollarError(f"collar depth {tau0:g} times max curvature {kmax:g} is not below 1")

    return DomainCurve(
        s=target, samples=x, tangent=tangent, normal=normal, curvature=kappa,
        length=length, collar_depth=float(tau0), kind=kind, params=params,
        radius_fn=radius_fn, _series=FourierSeries(x.T, length),
        _kappa_series=FourierSeries(kappa, length), _tree=cKDTree(x),
    )


class Region(enum.Enum):
    COLLAR = "collar"
    EXTERIOR = "exterior"
    DEEP = "deep"


class CollarLocation(NamedTuple):
    """Result of a closest-point projection onto the boundary."""

    s: float
    tau: float
    region: Region


def collar_point(curve: DomainCurve, s, tau) -> np.ndarray:
    """Map collar coordinates to the plane, ``x(s) + tau * nu(s)``.

    Raises
    ------
    DomainRangeError
        If any ``tau`` lies outside ``[0, collar_depth]``.
    """
    tau = np.asarray(tau, dtype=float)
    eps = 1e-14 * curve.collar_depth
    if np.any(tau < -eps) or np.any(tau > curve.collar_depth + eps):
        raise DomainRangeError(
            f"depth outside [0, {curve.collar_depth:g}]: {np.min(tau):g}..{np.max(tau):g}")
    s = np.asarray(s, dtype=float)
    return curve.point_at(s) + tau[..., None] * curve.normal_at(s)


def _newton_project(curve: DomainCurve, p: np.ndarray, s: np.ndarray, iters: int = 40):
    """Newton on the closest-point condition (x(s) - p) . x'(s) = 0."""
    h = curve.spacing
    done = np.zeros(s.size, dtype=bool)
    for _ in range(iters):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        si = s[idx]
        x0 = curve.point_at(si)
        x1 = curve.point_at(si, 1)
        x2 = curve.point_at(si, 2)
        diff = x0 - p[idx]
        f = np.einsum("ij,ij->i", diff, x1)
        fp = np.einsum("ij,ij->i", x1, x1) + np.einsum("ij,ij->i", diff, x2)
        bad = fp <= 0
        step = np.where(bad, 0.0, f / np.where(bad, 1.0, fp))
        step = np.clip(step, -h, h)
        s[idx] = si - step
        done[idx] = (np.abs(step) < 1e-13 * curve.length) & ~bad
    return s, done


def _dense_project(curve: DomainCurve, p: np.ndarray) -> float:
    """Fallback: dense sampling followed by bounded scalar minimization."""
    dense = np.linspace(0.0, curve.length, 16 * curve.grid_size, endpoint=False)
    d2 = np.sum((curve.point_at(dense) - p)**2, axis=-1)
    s0 = dense[int(np.argmin(d2))]
    h = dense[1] - dense[0]
    res = minimize_scalar(lambda s: float(np.sum((curve.point_at(s) - p)**2)),
                          bounds=(s0 - h, s0 + h), method="bounded",
                          options={"xatol": 1e-14})
    return float(res.x)


def locate_points(curve: DomainCurve, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized closest-point projection.

    Parameters
    ----------
    curve : DomainCurve
    points : array_like, shape (n, 2)

    Returns
    -------
    s, tau : ndarray, shape (n,)
        Arc length of the foot point in ``[0, length)`` and signed depth
        along the inward normal.
    region : ndarray of object
        :class:`Region` per point.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    _, nearest = curve._tree.query(p)
    s = curve.s[nearest].astype(float)
    s, ok = _newton_project(curve, p, s)
    for i in np.flatnonzero(~ok):
        s[i] = _dense_project(curve, p[i])
    s = np.mod(s, curve.length)
    tau = np.einsum("ij,ij->i", p - curve.point_at(s), curve.normal_at(s))
    inside = curve.contains(p)
    tol = 1e-12 * (1.0 + np.max(np.abs(curve.samples)))
    region = np.empty(p.shape[0], dtype=object)
    region[:] = Region.COLLAR
    region[tau > curve.collar_depth] = Region.DEEP
    region[(~inside & (np.abs(tau) > tol)) | (tau < -tol)] = Region.EXTERIOR
    return s, tau, region


def locate_in_collar(curve: DomainCurve, x) -> CollarLocation:
    """Collar coordinates of a single point.

    Examples
    --------
    >>> c = build_curve({"kind": "circle", "radius": 1.0})
    >>> loc = locate_in_collar(c, (0.8, 0.0))
    >>> round(loc.tau, 12), loc.region.value
    (0.2, 'collar')
    """
    s, tau, region = locate_points(curve, np.asarray(x, dtype=float)[None, :])
    return CollarLocation(float(s[0]), float(tau[0]), region[0])


@dataclass(frozen=True, eq=False)
class MetricTaylor:
    """Taylor coefficients in depth of ln J and L = J^-2, with J = 1 - tau*kappa.

    ``theta_big[j]`` holds the coefficient of tau^j in ln J and ``ell[j]``
    the coefficient of tau^j in L; both have shape (J_max + 1, M).
    """

    theta_big: np.ndarray
    ell: np.ndarray

    @property
    def order(self) -> int:
        return self.theta_big.shape[0] - 1


def metric_taylor(curve: DomainCurve, order: int) -> MetricTaylor:
    """Closed-form metric Taylor data for an arc-length parameterized curve.

    ``ln(1 - tau k) = -sum_j k^j tau^j / j`` and
    ``(1 - tau k)^-2 = sum_j (j + 1) k^j tau^j``.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    j = np.arange(order + 1)[:, None]
    kpow = curve.curvature[None, :] ** j
    theta_big = np.zeros_like(kpow)
    theta_big[1:] = -kpow[1:] / j[1:]
    ell = (j + 1) * kpow
    return MetricTaylor(theta_big=theta_big, ell=ell)
