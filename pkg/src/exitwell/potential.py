"""Polynomial single-well potentials, boundary traces and assumption checks.

Every supported potential is a bivariate polynomial held as monomial
coefficients. Values, gradients and Taylor data along normal rays are
therefore exact, and the homogeneous origin forms are read off directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AssumptionError, ConfigError
from .geometry import DomainCurve, FourierSeries


class Poly2:
    """Bivariate polynomial ``sum c * x**i * y**j``.

    Parameters
    ----------
    terms : iterable of (i, j, c)
        Exponents and coefficients; duplicates are summed and zeros dropped.
    """

    def __init__(self, terms: Iterable[tuple[int, int, float]]):
        acc: dict[tuple[int, int], float] = {}
        for i, j, c in terms:
            i, j = int(i), int(j)
            if i < 0 or j < 0:
                raise ConfigError(f"negative exponent in monomial ({i}, {j})")
            acc[(i, j)] = acc.get((i, j), 0.0) + float(c)
        items = sorted((k, v) for k, v in acc.items() if v != 0.0)
        self.exps = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, 2)
        self.coef = np.array([v for _, v in items], dtype=float)

    @property
    def terms(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(c)) for (i, j), c in zip(self.exps, self.coef)]

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if self.coef.size else 0

    @property
    def low_degree(self) -> int:
        return int(self.exps.sum(axis=1).min()) if self.coef.size else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for (i, j), c in zip(self.exps, self.coef):
            out = out + c * x[..., 0]**i * x[..., 1]**j
        return out

    def partial(self, axis: int) -> "Poly2":
        terms = []
        for (i, j), c in zip(self.exps, self.coef):
            e = (i, j)[axis]
            if e:
                terms.append((i - (axis == 0), j - (axis == 1), c * e))
        return Poly2(terms)

    def homogeneous_part(self, degree: int) -> "Poly2":
        return Poly2(t for t in self.terms if t[0] + t[1] == degree)

    def along_rays(self, base: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """Coefficients in ``tau`` of ``P(base + tau * direction)``.

        Returns an array of shape ``(degree + 1, n)`` for ``n`` rays.
        """
        base = np.atleast_2d(base)
        direction = np.atleast_2d(direction)
        n = base.shape[0]
        out = np.zeros((self.degree + 1, n))
        for (i, j), c in zip(self.exps, self.coef):
            ax = np.array([comb(i, a) * base[:, 0]**(i - a) * direction[:, 0]**a
                           for a in range(i + 1)])
            by = np.array([comb(j, b) * base[:, 1]**(j - b) * direction[:, 1]**b
                           for b in range(j + 1)])
            for a in range(i + 1):
                out[a:a + j + 1] += c * ax[a] * by
        return out


@dataclass(frozen=True, eq=False)
class Potential:
    """Single-well potential with an order-``k`` minimum at the origin.

    Attributes
    ----------
    poly : Poly2
        The potential V.
    origin_degree : int
        Order ``k`` of the first non-vanishing Taylor term at 0.
    kind : str
        Descriptor kind.
    params : dict
        Descriptor parameters.
    """

    poly: Poly2
    origin_degree: int
    kind: str = "polynomial"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_grad", (self.poly.partial(0), self.poly.partial(1)))

    def value(self, x) -> np.ndarray:
        return self.poly(x)

    def gradient(self, x) -> np.ndarray:
        gx, gy = self._grad
        return np.stack([gx(x), gy(x)], -1)

    def laplacian(self, x) -> np.ndarray:
        gx, gy = self._grad
        return gx.partial(0)(x) + gy.partial(1)(x)

    @property
    def origin_forms(self) -> tuple[Poly2, Poly2]:
        """Homogeneous parts ``(V0, V1)`` of degrees ``k`` and ``k + 1``."""
        k = self.origin_degree
        return self.poly.homogeneous_part(k), self.poly.homogeneous_part(k + 1)

    def is_radial(self, atol: float = 1e-13) -> bool:
        """True when V depends on |x| only (checked on a ring of points)."""
        phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        for r in (0.3, 0.7, 1.3):
            v = self.value(np.stack([r * np.cos(phi), r * np.sin(phi)], -1))
            if np.ptp(v) > atol * max(1.0, np.max(np.abs(v))):
                return False
        return True


def _radial_power_terms(k: int, scale: float):
    h = k // 2
    return [(2 * a, 2 * (h - a), scale * comb(h, a)) for a in range(h + 1)]


def build_potential(desc: Mapping) -> Potential:
    """Build a potential from a descriptor.

    Parameters
    ----------
    desc : mapping
        ``kind`` is one of

        - ``"radial_power"``: ``scale * |x|**k`` with even ``k >= 2``
          (``k``, optional ``scale``);
        - ``"quadratic_form"``: ``x . A x / 2`` with ``matrix`` symmetric
          positive definite;
        - ``"polynomial"``: ``terms`` as ``(i, j, c)`` triples for
          ``c * x**i * y**j`` and the origin order ``origin_degree``.

    Raises
    ------
    ConfigError
        Malformed descriptor.
    AssumptionError
        The origin is not a critical point, the declared order is wrong, or
        the leading form is not positive away from 0.
    """
    kind = str(desc.get("kind", ""))
    params = {k: v for k, v in desc.items() if k != "kind"}
    try:
        if kind == "radial_power":
            k = int(desc["k"])
            scale = float(desc.get("scale", 1.0))
            if k < 2 or k % 2:
                raise AssumptionError(
                    "smoothness", f"|x|^{k} is smooth at the origin only for even k >= 2")
            if scale <= 0:
                raise AssumptionError("positive-leading-form", "scale must be positive")
            poly = Poly2(_radial_power_terms(k, scale))
        elif kind == "quadratic_form":
            a = np.asarray(desc["matrix"], dtype=float)
            if a.shape != (2, 2) or not np.allclose(a, a.T, rtol=0, atol=1e-14):
                raise ConfigError("quadratic_form matrix must be a symmetric 2x2 array")
            if np.min(np.linalg.eigvalsh(a)) <= 0:
                raise AssumptionError("positive-leading-form",
                                      "quadratic_form matrix must be positive definite")
            k = 2
            poly = Poly2([(2, 0, a[0, 0] / 2), (1, 1, a[0, 1]), (0, 2, a[1, 1] / 2)])
        elif kind == "polynomial":
            terms = [tuple(t) for t in desc["terms"]]
            if any(len(t) != 3 for t in terms):
                raise ConfigError("polynomial terms must be (i, j, coefficient) triples")
            poly = Poly2(terms)
            k = int(desc["origin_degree"])
        else:
            raise ConfigError(f"unknown potential kind {kind!r}; expected radial_power, "
                              "quadratic_form or polynomial")
    except KeyError as exc:
        raise ConfigError(f"potential kind {kind!r} is missing parameter {exc.args[0]!r}") from None

    if poly.coef.size == 0:
        raise AssumptionError("positive-leading-form", "potential is identically zero")
    low = poly.low_degree
    if low < 2:
        raise AssumptionError("critical-point-at-origin",
                              "V(0) = 0 and grad V(0) = 0 require no constant or linear terms")
    if k < 2 or low != k:
        raise AssumptionError("origin-degree",
                              f"declared origin degree {k} but the lowest-order term has degree {low}")
    pot = Potential(poly=poly, origin_degree=k, kind=kind, params=params)
    v0, _ = pot.origin_forms
    phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    ring = v0(np.stack([np.cos(phi), np.sin(phi)], -1))
    if np.min(ring) <= 0:
        raise AssumptionError("positive-leading-form",
                              f"leading form of degree {k} has minimum {np.min(ring):.3g} "
                              "on the unit circle; it must be positive")
    return pot


@dataclass(frozen=True, eq=False)
class BoundaryTraces:
    """Depth Taylor coefficients of V along inward normals.

    Attributes
    ----------
    theta : ndarray, shape (J_max + 1, M)
        ``theta[j][m]`` is the coefficient of ``tau**j`` in ``V(x(s_m) + tau nu(s_m))``.
    theta_min : float
        Minimum of the boundary trace ``theta[0]``.
    c2 : float
        Minimum of ``-dV/dtau`` over the collar ``0 <= tau <= collar_depth``.
    c2_boundary : float
        Minimum of ``-theta[1]``, the same quantity on the boundary itself.
    length : float
        Perimeter of the curve the traces live on.
    """

    theta: np.ndarray
    theta_min: float
    c2: float
    c2_boundary: float
    length: float

    @property
    def order(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def theta1(self) -> np.ndarray:
        return self.theta[1]


def boundary_traces(potential: Potential, curve: DomainCurve, order: int) -> BoundaryTraces:
    """Exact depth Taylor data of V on the boundary.

    Parameters
    ----------
    potential : Potential
    curve : DomainCurve
    order : int
        Highest Taylor index ``J_max``.

    Raises
    ------
    AssumptionError
        If the inward normal derivative is not strictly negative everywhere.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    ray = potential.poly.along_rays(curve.samples, curve.normal)
    theta = np.zeros((order + 1, curve.grid_size))
    rows = min(order + 1, ray.shape[0])
    theta[:rows] = ray[:rows]
    if np.max(theta[1]) >= 0:
        m = int(np.argmax(theta[1]))
        raise AssumptionError(
            "inward-decrease",
            f"normal derivative dV/dtau = {theta[1][m]:.4g} >= 0 at boundary point "
            f"{tuple(np.round(curve.samples[m], 6))}; V must decrease strictly inward")

    taus = np.linspace(0.0, curve.collar_depth, 65)
    j = np.arange(1, ray.shape[0])[:, None, None]
    slope = np.sum(j * ray[1:, None, :] * taus[None, :, None]**(j - 1), axis=0)
    c2 = float(np.min(-slope))
    return BoundaryTraces(theta=theta, theta_min=_refined_min(theta[0], curve.length),
                          c2=c2, c2_boundary=float(np.min(-theta[1])), length=curve.length)


def _refined_min(values: np.ndarray, length: float) -> float:
    """Minimum of the trigonometric interpolant near the smallest sample."""
    m = int(np.argmin(values))
    if np.ptp(values) <= 1e-14 * max(1.0, abs(values[m])):
        return float(np.min(values))
    series = FourierSeries(values, length)
    h = length / values.size
    s0 = m * h
    res = minimize_scalar(lambda s: float(series(s)), bounds=(s0 - h, s0 + h),
                          method="bounded", options={"xatol": 1e-13})
    return float(min(res.fun, values[m]))


@dataclass(frozen=True)
class AssumptionReport:
    """Measured constants and verdicts for the standing hypotheses."""

    c1: float
    c2: float
    c2_boundary: float
    theta_min: float
    rho1: float
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def as_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c2_boundary": self.c2_boundary,
                "theta_min": self.theta_min, "rho1": self.rho1,
                "checks": dict(self.checks), "ok": self.ok}


def check_assumptions(potential: Potential, curve: DomainCurve, rho1: float = 0.1,
                      n_angle: int = 256, n_radius: int = 128) -> AssumptionReport:
    """Measure the constants of the standing hypotheses (report only).

    Parameters
    ----------
    potential, curve
        Configuration to check.
    rho1 : float
        Radius of the excluded ball for the gradient lower bound ``c1``.
    n_angle, n_radius : int
        Resolution of the polar sample grid.

    Returns
    -------
    AssumptionReport
        ``c1`` is the smallest ``|grad V|`` on the sampled part of the
        domain outside ``B(0, rho1)``; ``c2`` and ``theta_min`` come from
        the boundary traces. Nothing is raised.
    """
    phi = np.linspace(0, 2 * np.pi, n_angle, endpoint=False)
    rb = curve.boundary_radius(phi)
    checks = {}
    origin = np.zeros((1, 2))
    checks["critical-point-at-origin"] = bool(
        abs(potential.value(origin)[0]) <= 1e-12
        and np.max(np.abs(potential.gradient(origin))) <= 1e-12)
    v0, _ = potential.origin_forms
    ring = v0(np.stack([np.cos(phi), np.sin(phi)], -1))
    checks["positive-leading-form"] = bool(np.min(ring) > 0)

    frac = np.linspace(0, 1, n_radius + 1)[1:]
    pts = (frac[:, None, None] * rb[None, :, None]
           * np.stack([np.cos(phi), np.sin(phi)], -1)[None])
    checks["positive-away-from-origin"] = bool(np.min(potential.value(pts)) > 0)

    c1 = np.nan
    if np.all(rb > rho1):
        rr = rho1 + np.linspace(0, 1, n_radius)[:, None] * (rb - rho1)[None, :]
        outer = rr[..., None] * np.stack([np.cos(phi), np.sin(phi)], -1)[None]
        c1 = float(np.min(np.linalg.norm(potential.gradient(outer), axis=-1)))
    checks["gradient-bounded-below"] = bool(np.isfinite(c1) and c1 > 0)

    checks["collar-injective"] = bool(curve.collar_depth * np.max(np.abs(curve.curvature)) < 1)
    try:
        tr = boundary_traces(potential, curve, 2)
        c2, c2b, tmin = tr.c2, tr.c2_boundary, tr.theta_min
        checks["inward-decrease"] = True
        checks["collar-decrease"] = bool(c2 > 0)
    except AssumptionError:
        ray = potential.poly.along_rays(curve.samples, curve.normal)
        c2 = c2b = float(np.min(-ray[1])) if ray.shape[0] > 1 else 0.0
        tmin = float(np.min(ray[0]))
        checks["inward-decrease"] = False
        checks["collar-decrease"] = False
    checks["positive-boundary-trace"] = bool(tmin > 0)
    return AssumptionReport(c1=c1, c2=c2, c2_boundary=c2b, theta_min=tmin,
                            rho1=float(rho1), checks=checks)
