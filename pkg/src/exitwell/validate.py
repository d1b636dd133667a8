"""Independent oracles for the asymptotic formulas.

- :func:`radial_bvp`: finite-volume solution of the exit-time equation for a
  radial potential in a disk, plus the exact closed form where one exists;
- :func:`radial_eigen`: lowest eigenvalue of the discretized Witten-type
  operator ``-eps^2 Laplacian + |grad V|^2 / (4 eps^2) - Laplacian(V) / 2``;
- :func:`mc_exit`: Euler-Maruyama simulation of ``dY = -grad V dt + sqrt(2) eps dW``
  until the first exit.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy.integrate import quad
from scipy.linalg import solveh_banded

from .errors import AssumptionError, DomainRangeError, NumericalError
from .geometry import DomainCurve
from .potential import Potential


@dataclass(frozen=True)
class RadialProfile:
    """Radial potential ``v(r)`` with derivative and Laplacian.

    ``quadratic_scale`` is ``c`` when ``v = c r^2 / 2`` (enables the closed form).
    """

    v: Callable[[np.ndarray], np.ndarray]
    dv: Callable[[np.ndarray], np.ndarray]
    lap: Callable[[np.ndarray], np.ndarray]
    quadratic_scale: float | None = None


def radial_profile(potential: Potential) -> RadialProfile:
    """Radial profile of a rotation-invariant potential, sampled along the x axis."""
    if not potential.is_radial():
        raise AssumptionError("radial", "potential is not rotation invariant")
    gx = potential.poly.partial(0)

    def on_axis(f):
        return lambda r: f(np.stack([np.asarray(r, float), np.zeros_like(np.asarray(r, float))], -1))
    scale = None
    v0, _ = potential.origin_forms
    if potential.origin_degree == 2 and potential.poly.degree == 2:
        scale = float(2 * v0(np.array([1.0, 0.0])))
    return RadialProfile(v=on_axis(potential.value), dv=on_axis(gx),
                         lap=on_axis(potential.laplacian), quadratic_scale=scale)


def quadratic_profile(scale: float = 1.0) -> RadialProfile:
    """Profile of ``v = scale * r^2 / 2``."""
    return RadialProfile(v=lambda r: 0.5 * scale * np.asarray(r, float)**2,
                         dv=lambda r: scale * np.asarray(r, float),
                         lap=lambda r: np.full_like(np.asarray(r, float), 2.0 * scale),
                         quadratic_scale=scale)


@dataclass(frozen=True)
class RadialSolution:
    """Discrete radial exit-time solution.

    Attributes
    ----------
    r, u : ndarray
        Grid and nodal values, ``u[-1] = 0``.
    u0 : float
        Value at the origin.
    u0_reference : float or None
        Exact value at the origin when available.
    monotone : bool
        Whether ``u`` decreases in ``r``.
    eigenvalue : float or None
        Filled by :func:`radial_eigen` when requested together.
    """

    r: np.ndarray
    u: np.ndarray
    u0: float
    u0_reference: float | None
    monotone: bool
    eigenvalue: float | None = None


def exact_radial_exit_time(profile: RadialProfile, radius: float, eps: float, r: float = 0.0) -> float:
    """Exact radial mean exit time at distance ``r`` from the centre.

    For ``v = c r^2 / 2`` this is ``int_r^R (exp(c t^2 / (2 eps^2)) - 1) / (c t) dt``;
    otherwise the nested quadrature
    ``int_r^R exp(v(t)/eps^2) / (eps^2 t) int_0^t q exp(-v(q)/eps^2) dq dt``.
    """
    c = profile.quadratic_scale
    if c is not None:
        val, _ = quad(lambda t: np.expm1(c * t * t / (2 * eps**2)) / (c * t) if t > 0 else 0.5 * t / eps**2,
                      r, radius, epsabs=0, epsrel=1e-13, limit=400)
        return float(val)

    def inner(t):
        vt = float(profile.v(t))
        val, _ = quad(lambda q: q * np.exp(-(float(profile.v(q)) - vt) / eps**2), 0, t,
                      epsabs=0, epsrel=1e-12, limit=200)
        return val / (eps**2 * t) if t > 0 else 0.0
    val, _ = quad(inner, r, radius, epsabs=0, epsrel=1e-11, limit=400)
    return float(val)


def _graded_grid(radius: float, n: int, weight: float = 0.9) -> np.ndarray:
    xi = np.linspace(0.0, 1.0, n + 1)
    return radius * ((1 - weight) * xi + weight * np.sin(0.5 * np.pi * xi))


def radial_bvp(profile: RadialProfile, radius: float, eps: float, grid_size: int = 4096) -> RadialSolution:
    """Finite-volume solution of ``-eps^2 (u'' + u'/r) + v' u' = 1``, ``u'(0) = 0``, ``u(R) = 0``.

    The equation is used in the conservative form
    ``-eps^2 (r exp(-v/eps^2) u')' = r exp(-v/eps^2)`` on a grid graded toward
    ``r = R``.

    Raises
    ------
    DomainRangeError
        If fewer than 5 nodes fall inside the layer ``[R - eps^2, R]``.
    """
    r = _graded_grid(radius, grid_size)
    inside = int(np.sum(r >= radius - eps**2))
    if inside < 5:
        need = grid_size
        while np.sum(_graded_grid(radius, need) >= radius - eps**2) < 5:
            need *= 2
        raise DomainRangeError(f"grid too coarse for the boundary layer: {inside} nodes in "
                               f"[R - eps^2, R]; use grid_size >= {need}")
    vmax = float(profile.v(radius))

    def rho(x):
        return x * np.exp(-(profile.v(x) - vmax) / eps**2)
    h = np.diff(r)
    mid = 0.5 * (r[:-1] + r[1:])
    cond = eps**2 * rho(mid) / h
    # Right side: exact-enough integral of rho over each control volume.
    gx, gw = np.polynomial.legendre.leggauss(4)
    edges = np.concatenate([[0.0], mid, [radius]])
    a, b = edges[:-1, None], edges[1:, None]
    q = 0.5 * (b - a) * gx + 0.5 * (a + b)
    rhs = np.sum(0.5 * (b - a) * gw * rho(q), axis=1)[:-1]
    # The tridiagonal system is solved through its flux form: conservation
    # gives the face fluxes as partial sums of the right side, and u follows
    # by summing flux / conductance inward from u(R) = 0. Gaussian elimination
    # would cancel catastrophically when the weights span many decades.
    flux = np.cumsum(rhs)
    drop = flux / cond
    u = np.append(np.cumsum(drop[::-1])[::-1], 0.0)
    ref = exact_radial_exit_time(profile, radius, eps) if profile.quadratic_scale is not None else None
    return RadialSolution(r=r, u=u, u0=float(u[0]), u0_reference=ref,
                          monotone=bool(np.all(np.diff(u) <= 0)))


def _eigen_system(profile: RadialProfile, radius: float, eps: float, n: int):
    h = radius / n
    r = h * np.arange(n)
    mass = r * h
    mass[0] = h * h / 8
    rf = h * (np.arange(n) + 0.5)
    dv, lap = profile.dv(r), profile.lap(r)
    w = dv**2 / (4 * eps**2) - 0.5 * lap
    diag = eps**2 * rf / h + mass * w
    diag[1:] += eps**2 * rf[:-1] / h
    off = -eps**2 * rf[:-1] / h
    sq = np.sqrt(mass)
    return r, diag / mass, off / (sq[:-1] * sq[1:])


def radial_eigen(profile: RadialProfile, radius: float, eps: float, grid_size: int = 8192,
                 tol: float = 1e-14, max_iter: int = 200, return_vector: bool = False):
    """Lowest eigenvalue of the radial operator
    ``-eps^2 (d^2/dr^2 + (1/r) d/dr) + |v'|^2 / (4 eps^2) - Laplacian(v) / 2``
    with a Dirichlet condition at ``R``.

    Finite volumes on a uniform grid with the measure ``r dr`` folded in
    symmetrically give a symmetric tridiagonal matrix; its lowest eigenvalue
    is found by inverse iteration with zero shift.

    Returns
    -------
    float, or (float, r, vector, matrix bands) when ``return_vector`` is set.

    Raises
    ------
    NumericalError
        If the iteration does not converge or the matrix is not positive definite.
    """
    r, d, e = _eigen_system(profile, radius, eps, grid_size)
    ab = np.zeros((2, grid_size))
    ab[0, 1:] = e
    ab[1] = d
    x = np.exp(-profile.v(r) / (4 * eps**2))
    x /= np.linalg.norm(x)
    lam = np.inf
    for _ in range(max_iter):
        try:
            y = solveh_banded(ab, x)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"shift-zero solve failed: {exc}") from None
        new = float(np.dot(x, x) / np.dot(x, y))
        x = y / np.linalg.norm(y)
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    else:
        raise NumericalError(f"inverse iteration did not converge in {max_iter} steps")
    if not lam > 0:
        raise NumericalError(f"non-positive discrete eigenvalue {lam!r}")
    if return_vector:
        return lam, r, x, (d, e)
    return lam


def rayleigh_quotient(x: np.ndarray, bands: tuple[np.ndarray, np.ndarray]) -> float:
    """``x.T A x / x.x`` for a symmetric tridiagonal matrix given by its bands."""
    d, e = bands
    ax = d * x
    ax[:-1] += e * x[1:]
    ax[1:] += e * x[:-1]
    return float(np.dot(x, ax) / np.dot(x, x))


# Monte Carlo.

_KIND = {"circle": 0, "ellipse": 1, "fourier_star": 2}


@numba.njit(nogil=True, cache=True)
def _inside(x, y, kind, prm, cos_c, sin_c, r_in2):
    r2 = x * x + y * y
    if r2 < r_in2:
        return True
    if kind == 0:
        return r2 < prm[0] * prm[0]
    if kind == 1:
        return (x / prm[0]) ** 2 + (y / prm[1]) ** 2 < 1.0
    phi = math.atan2(y, x)
    rho = prm[0]
    for m in range(cos_c.size):
        rho += cos_c[m] * math.cos((m + 1) * phi)
    for m in range(sin_c.size):
        rho += sin_c[m] * math.sin((m + 1) * phi)
    return r2 < rho * rho


@numba.njit(nogil=True, cache=True)
def _simulate_path(gen, x0, y0, dt, sigma, gxe, gxc, gye, gyc, deg,
                   kind, prm, cos_c, sin_c, r_in2, max_steps):
    x, y = x0, y0
    xp = np.empty(deg + 1)
    yp = np.empty(deg + 1)
    n = 0
    while True:
        n += 1
        xp[0] = 1.0
        yp[0] = 1.0
        for k in range(1, deg + 1):
            xp[k] = xp[k - 1] * x
            yp[k] = yp[k - 1] * y
        gx = 0.0
        for t in range(gxc.size):
            gx += gxc[t] * xp[gxe[t, 0]] * yp[gxe[t, 1]]
        gy = 0.0
        for t in range(gyc.size):
            gy += gyc[t] * xp[gye[t, 0]] * yp[gye[t, 1]]
        x += -gx * dt + sigma * gen.standard_normal()
        y += -gy * dt + sigma * gen.standard_normal()
        if not _inside(x, y, kind, prm, cos_c, sin_c, r_in2):
            return n, x, y, False
        if n >= max_steps:
            return n, x, y, True


@dataclass(frozen=True)
class McResult:
    """Monte Carlo exit statistics.

    Attributes
    ----------
    n_paths : int
    dt : float
    mean, stderr : float
        Sample mean and standard error of the exit time over completed paths.
    histogram : ndarray, shape (n_bins,)
        Exit-angle counts on ``[-pi, pi)``; sums to the completed paths.
    seed : int
    n_overrun : int
        Paths that hit the step budget (excluded from the statistics).
    times : ndarray
        Exit times of completed paths.
    exit_points : ndarray, shape (n, 2)
        First positions outside the domain.
    """

    n_paths: int
    dt: float
    mean: float
    stderr: float
    histogram: np.ndarray
    seed: int
    n_overrun: int
    times: np.ndarray
    exit_points: np.ndarray

    def summary(self) -> dict:
        return {"n_paths": self.n_paths, "dt": self.dt, "mean": self.mean,
                "stderr": self.stderr, "seed": self.seed, "n_overrun": self.n_overrun,
                "histogram": self.histogram.tolist()}


def _kernel_args(potential: Potential, curve: DomainCurve):
    gx, gy = potential.poly.partial(0), potential.poly.partial(1)
    deg = max(gx.degree, gy.degree, 1)
    kind = _KIND[curve.kind]
    p = curve.params
    cos_c = np.zeros(0)
    sin_c = np.zeros(0)
    if kind == 0:
        prm = np.array([float(p.get("radius", 1.0))])
    elif kind == 1:
        prm = np.array([float(p["a"]), float(p["b"])])
    else:
        prm = np.array([float(p["mean_radius"])])
        cos_c = np.asarray(p.get("cos", []), dtype=float).reshape(-1)
        sin_c = np.asarray(p.get("sin", []), dtype=float).reshape(-1)
    phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    r_in = 0.999 * float(np.min(curve.boundary_radius(phi)))
    return ((gx.exps.reshape(-1, 2), gx.coef, gy.exps.reshape(-1, 2), gy.coef, deg),
            (kind, prm, cos_c, sin_c, r_in * r_in))


def mc_exit(potential: Potential, curve: DomainCurve, eps: float, x0, dt: float, n_paths: int,
            seed: int, n_bins: int = 36, max_steps: int = 50_000_000, threads: int | None = None,
            stream: int = 0) -> McResult:
    """Euler-Maruyama exit times ``Y <- Y - grad V(Y) dt + sqrt(2 dt) eps xi``.

    Path ``i`` draws from its own PCG64 generator seeded by
    ``SeedSequence([seed, stream, i])``, so results do not depend on the
    number of threads or the order in which paths run. The exit time is
    ``n dt`` for the first step ``n`` whose position lies outside the domain.

    Parameters
    ----------
    potential, curve
        Configuration.
    eps : float
    x0 : point inside the domain
    dt : float
    n_paths : int
    seed : int
    n_bins : int
        Exit-angle histogram bins on ``[-pi, pi)``.
    max_steps : int
        Step budget per path; overruns are counted and excluded.
    threads : int, optional
        Worker threads (default: available CPUs).
    stream : int
        Extra seed component distinguishing runs that share ``seed``
        (e.g. different step sizes).
    """
    x0 = np.asarray(x0, dtype=float)
    if dt <= 0 or n_paths < 1 or eps <= 0:
        raise ValueError("dt, eps must be positive and n_paths >= 1")
    if not curve.contains(x0[None])[0]:
        raise DomainRangeError(f"starting point {tuple(x0)} is outside the domain")
    grad, dom = _kernel_args(potential, curve)
    sigma = math.sqrt(2 * dt) * eps
    steps = np.zeros(n_paths, dtype=np.int64)
    ends = np.zeros((n_paths, 2))
    over = np.zeros(n_paths, dtype=bool)

    def work(lo, hi):
        for i in range(lo, hi):
            gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, i])))
            n, x, y, o = _simulate_path(gen, float(x0[0]), float(x0[1]), dt, sigma, *grad, *dom,
                                        max_steps)
            steps[i], ends[i], over[i] = n, (x, y), o

    threads = threads or os.cpu_count() or 1
    block = max(1, -(-n_paths // (4 * threads)))
    if threads == 1:
        work(0, n_paths)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda lo: work(lo, min(lo + block, n_paths)), range(0, n_paths, block)))
    ok = ~over
    times = steps[ok] * dt
    if times.size == 0:
        raise NumericalError("every path exceeded the step budget")
    angles = np.arctan2(ends[ok, 1], ends[ok, 0])
    hist, _ = np.histogram(angles, bins=n_bins, range=(-np.pi, np.pi))
    se = float(np.std(times, ddof=1) / np.sqrt(times.size)) if times.size > 1 else float("nan")
    return McResult(n_paths=n_paths, dt=dt, mean=float(np.mean(times)), stderr=se,
                    histogram=hist, seed=int(seed), n_overrun=int(np.sum(over)),
                    times=times, exit_points=ends[ok])


@dataclass(frozen=True)
class Extrapolated:
    """Step-size extrapolation of two Monte Carlo means under an ``O(sqrt(dt))`` bias."""

    mean: float
    stderr: float
    coarse: McResult
    fine: McResult


def extrapolate_exit_mean(coarse: McResult, fine: McResult) -> Extrapolated:
    """Remove the ``c sqrt(dt)`` bias: ``(m_f sqrt(dt_c) - m_c sqrt(dt_f)) / (sqrt(dt_c) - sqrt(dt_f))``."""
    a, b = math.sqrt(coarse.dt), math.sqrt(fine.dt)
    if a <= b:
        raise ValueError("coarse run must use the larger step")
    wf, wc = a / (a - b), b / (a - b)
    mean = wf * fine.mean - wc * coarse.mean
    se = math.hypot(wf * fine.stderr, wc * coarse.stderr)
    return Extrapolated(mean, se, coarse, fine)


def mc_exit_extrapolated(potential: Potential, curve: DomainCurve, eps: float, x0,
                         dt_levels: tuple[float, float], n_paths: int, seed: int,
                         **kwargs) -> Extrapolated:
    """Run :func:`mc_exit` at two step sizes (independent streams) and extrapolate."""
    dt_c, dt_f = sorted(dt_levels, reverse=True)
    coarse = mc_exit(potential, curve, eps, x0, dt_c, n_paths, seed, stream=0, **kwargs)
    fine = mc_exit(potential, curve, eps, x0, dt_f, n_paths, seed, stream=1, **kwargs)
    return extrapolate_exit_mean(coarse, fine)
