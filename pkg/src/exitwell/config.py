"""Run configuration: a TOML file with domain, potential, expansion and oracle sections.

Numbers are parsed as :class:`decimal.Decimal` so that the configuration echo
in the report reproduces the file exactly; they are converted to floats only
where the numerics need them.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

DEFAULT_EPS = (0.5, 0.4, 0.3)


def _plain(obj: Any) -> Any:
    """Decimals to floats, recursively."""
    if isinstance(obj, Decimal):
        return float(obj)
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _echo(obj: Any) -> Any:
    """Decimals to their exact text, for the configuration echo."""
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, Mapping):
        return {k: _echo(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_echo(v) for v in obj]
    return obj


@dataclass(frozen=True)
class McSettings:
    enabled: bool = False
    dt_levels: tuple[float, float] = (1e-4, 5e-5)
    n_paths: int = 20000
    seed: int = 12345
    step_budget: int = 50_000_000
    x0: tuple[float, float] = (0.0, 0.0)
    eps_min: float = 0.3
    rel_tolerance: float = 0.15


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    Attributes
    ----------
    domain, potential : dict
        Descriptors for :func:`~exitwell.geometry.build_curve` and
        :func:`~exitwell.potential.build_potential`.
    order : int
        Expansion order ``N``.
    eps : tuple of float
        Strictly decreasing positive values.
    probe_points : tuple of (float, float)
    delta : float or None
        Cutoff width override.
    rho1 : float
        Excluded radius for the gradient bound.
    radial_bvp, radial_eigen : bool
        Oracle toggles (used only for radial configurations).
    bvp_grid, eigen_grid : int
    rel_tolerance : float
        Band for asymptotic-vs-oracle comparison rows.
    mc : McSettings
    output_dir : str
    raw : dict
        Exact echo of the parsed file.
    """

    domain: dict
    potential: dict
    order: int = 4
    eps: tuple = DEFAULT_EPS
    probe_points: tuple = ((0.0, 0.0),)
    delta: float | None = None
    rho1: float = 0.1
    radial_bvp: bool = True
    radial_eigen: bool = True
    bvp_grid: int = 4096
    eigen_grid: int = 8192
    rel_tolerance: float = 0.1
    mc: McSettings = field(default_factory=McSettings)
    output_dir: str = "exitwell-out"
    raw: dict = field(default_factory=dict)


def _section(doc: Mapping, name: str, required: bool = False) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing required section [{name}]")
        return {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _get(sec: Mapping, path: str, key: str, kind, default):
    if key not in sec:
        return default
    val = sec[key]
    try:
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is int:
            if isinstance(val, bool) or (isinstance(val, Decimal) and val != int(val)):
                raise TypeError
            return int(val)
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {val!r}") from None


def _points(val, path: str) -> tuple:
    try:
        pts = tuple((float(p[0]), float(p[1])) for p in val)
        if any(len(p) != 2 for p in val):
            raise ValueError
        return pts
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"{path}: expected a list of [x, y] pairs") from None


def parse_config(doc: Mapping) -> RunConfig:
    """Validate a parsed TOML document (with Decimal numbers)."""
    domain = _plain(_section(doc, "domain", required=True))
    potential = _plain(_section(doc, "potential", required=True))
    if "kind" not in domain:
        raise ConfigError("domain.kind is required")
    if "kind" not in potential:
        raise ConfigError("potential.kind is required")
    exp = _section(doc, "expansion")
    order = _get(exp, "expansion", "order", int, 4)
    if order < 0:
        raise ConfigError("expansion.order must be >= 0")
    eps = tuple(float(e) for e in exp.get("eps", DEFAULT_EPS))
    if not eps:
        raise ConfigError("expansion.eps must not be empty")
    if any(e <= 0 for e in eps):
        raise ConfigError(f"expansion.eps: values must be positive, got {list(eps)}")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"expansion.eps: values must be strictly decreasing, got {list(eps)}")
    probes = _points(exp.get("probe_points", [[0.0, 0.0]]), "expansion.probe_points")
    delta = exp.get("delta")
    rho1 = _get(exp, "expansion", "rho1", float, 0.1)

    val = _section(doc, "validate")
    mc_sec = _section(doc, "mc")
    dts = tuple(float(d) for d in mc_sec.get("dt_levels", (1e-4, 5e-5)))
    if len(dts) != 2 or dts[0] <= dts[1] or dts[1] <= 0:
        raise ConfigError("mc.dt_levels: expected [coarse, fine] with coarse > fine > 0")
    x0 = _points([mc_sec.get("x0", [0.0, 0.0])], "mc.x0")[0]
    mc = McSettings(
        enabled=_get(val, "validate", "monte_carlo", bool, False),
        dt_levels=dts,
        n_paths=_get(mc_sec, "mc", "n_paths", int, 20000),
        seed=_get(mc_sec, "mc", "seed", int, 12345),
        step_budget=_get(mc_sec, "mc", "step_budget", int, 50_000_000),
        x0=x0,
        eps_min=_get(mc_sec, "mc", "eps_min", float, 0.3),
        rel_tolerance=_get(mc_sec, "mc", "rel_tolerance", float, 0.15),
    )
    if mc.n_paths < 2:
        raise ConfigError("mc.n_paths must be >= 2")
    out = _section(doc, "output")
    return RunConfig(
        domain=domain, potential=potential, order=order, eps=eps, probe_points=probes,
        delta=None if delta is None else float(delta), rho1=rho1,
        radial_bvp=_get(val, "validate", "radial_bvp", bool, True),
        radial_eigen=_get(val, "validate", "radial_eigen", bool, True),
        bvp_grid=_get(val, "validate", "bvp_grid", int, 4096),
        eigen_grid=_get(val, "validate", "eigen_grid", int, 8192),
        rel_tolerance=_get(val, "validate", "rel_tolerance", float, 0.1),
        mc=mc, output_dir=str(out.get("dir", "exitwell-out")), raw=_echo(dict(doc)),
    )


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a TOML run configuration.

    Raises
    ------
    ConfigError
        With the line and column for syntax errors, or the offending field.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh, parse_float=Decimal)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc)
