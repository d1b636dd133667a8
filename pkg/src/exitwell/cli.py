"""Command line front end and the run pipeline.

``exitwell <inspect|expand|evaluate|validate|report> --config run.toml``

Exit codes: 0 success, 1 configuration error, 2 assumption failure,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .asym import (build_expansion, eigenvalue, exit_law_density, k_constants, max_exit_time,
                   mean_exit_time, qsd_normalizer, torsional_rigidity)
from .config import RunConfig, load_config
from .errors import AssumptionError, ConfigError, DomainRangeError, ExitwellError, NumericalError
from .geometry import build_curve
from .potential import build_potential, check_assumptions
from .quad import laplace_leading_mu
from .validate import mc_exit_extrapolated, radial_bvp, radial_eigen, radial_profile

log = logging.getLogger("exitwell")

STAGES = ("inspect", "expand", "evaluate", "validate", "report")
SCHEMA = 1


def _clean(obj: Any) -> Any:
    """JSON-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _row(name: str, eps: float | None, asymptotic, oracle, tolerance: float, passed: bool,
         **extra) -> dict:
    rel = None
    if asymptotic is not None and oracle not in (None, 0):
        rel = abs(asymptotic - oracle) / abs(oracle)
    return {"name": name, "eps": eps, "asymptotic": asymptotic, "oracle": oracle,
            "rel_error": rel, "tolerance": tolerance, "pass": bool(passed), **extra}


def _skipped(reason: str) -> dict:
    return {"skipped": True, "reason": reason}


def _setup(cfg: RunConfig):
    try:
        curve = build_curve(cfg.domain)
        pot = build_potential(cfg.potential)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    probes = np.asarray(cfg.probe_points, dtype=float)
    if not np.all(curve.contains(probes)):
        bad = probes[~curve.contains(probes)][0]
        raise ConfigError(f"expansion.probe_points: {tuple(bad)} lies outside the domain")
    return curve, pot


def _inspect(cfg: RunConfig, curve, pot) -> dict:
    rep = check_assumptions(pot, curve, cfg.rho1)
    if not rep.ok:
        raise AssumptionError(rep.failures[0], f"standing hypotheses violated: {rep.failures}")
    v0, v1 = pot.origin_forms
    return {
        "assumptions": rep.as_dict(),
        "geometry": {"kind": curve.kind, "grid_size": curve.grid_size, "length": curve.length,
                     "area": curve.area(), "collar_depth": curve.collar_depth,
                     "curvature_max": float(np.max(curve.curvature)),
                     "curvature_min": float(np.min(curve.curvature)), "dim": curve.dim},
        "potential": {"kind": pot.kind, "origin_degree": pot.origin_degree,
                      "V0_terms": v0.terms, "V1_terms": v1.terms},
    }


def _layer_csv(exp, path: Path) -> None:
    cols = {"s": exp.curve.s}
    for j, p in enumerate(exp.phis):
        for m, c in enumerate(p.coeffs):
            cols[f"Phi{j}_c{m}"] = c
    for j, u in enumerate(exp.us[:exp.order], start=1):
        for m, c in enumerate(u.coeffs):
            cols[f"U{j}_c{m}"] = c
    cols["theta1"] = exp.traces.theta[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*cols.values()):
            w.writerow([repr(float(v)) for v in row])


def _entry(exp, cfg: RunConfig, eps: float) -> dict:
    table = exp.table(eps)
    lam = eigenvalue(exp, eps)
    kc = k_constants(exp, eps)
    law = exit_law_density(exp, eps)
    mx = max_exit_time(exp, eps)
    lap = laplace_leading_mu(exp.traces, eps)
    norm, vol = qsd_normalizer(exp, eps)
    probes = np.asarray(cfg.probe_points, dtype=float)
    stride = max(1, law.s.size // 32)
    flags = []
    if lam.scaled <= 0:
        flags.append("non-positive truncated eigenvalue numerator")
    if law.flagged:
        flags.append("negative exit-law density from truncation")
    return {
        "eps": eps,
        "order": exp.order,
        "exit_time_label": "leading/external only" if exp.order == 0 else "full",
        "table": table.as_dict(),
        "lambda": lam.as_dict(),
        "K_exp": kc.K_exp.as_dict(),
        "K_pow": kc.K_pow,
        "K": kc.K,
        "mu_ratios": (table.mu.scaled / table.mu.scaled[0]).tolist(),
        "eta_ratios": (table.eta.scaled / table.mu.scaled[0]).tolist(),
        "u_at_probe_points": [{"x": list(p), "u": float(v)}
                              for p, v in zip(probes, mean_exit_time(exp, eps, probes))],
        "torsional_rigidity": torsional_rigidity(exp, eps),
        "max_exit_time": {"K": mx.K, "grid_max": mx.grid_max, "location": mx.location.tolist(),
                          "caveat": "equals K up to O(eps^2)"},
        "qsd_normalizer": {"with_layer": norm, "volume": vol},
        "exit_law": {"s": law.s[::stride].tolist(), "density": law.density[::stride].tolist()},
        "laplace_mu0": {"kind": lap.kind, "value": lap.value, "reason": lap.reason},
        "flags": flags,
        "error": None,
    }


def _validate(cfg: RunConfig, curve, pot, exp, threads: int | None) -> dict:
    rows: list[dict] = []
    out: dict = {"comparisons": rows}
    radial = curve.kind == "circle" and pot.is_radial()
    radius = float(curve.params.get("radius", 1.0)) if curve.kind == "circle" else None
    prof = radial_profile(pot) if radial else None
    if not radial:
        out["radial"] = _skipped("configuration is not radial")
    else:
        for eps in cfg.eps:
            u_asym = float(mean_exit_time(exp, eps, np.zeros(2)))
            if cfg.radial_bvp:
                sol = radial_bvp(prof, radius, eps, cfg.bvp_grid)
                if sol.u0_reference is not None:
                    rows.append(_row("radial_bvp_vs_exact", eps, sol.u0, sol.u0_reference, 1e-6,
                                     abs(sol.u0 / sol.u0_reference - 1) <= 1e-6))
                rows.append(_row("u0_asymptotic_vs_bvp", eps, u_asym, sol.u0, cfg.rel_tolerance,
                                 abs(u_asym / sol.u0 - 1) <= cfg.rel_tolerance,
                                 monotone=sol.monotone))
            if cfg.radial_eigen:
                lam_hat = radial_eigen(prof, radius, eps, cfg.eigen_grid)
                lam = float(eigenvalue(exp, eps))
                rows.append(_row("lambda_asymptotic_vs_discrete", eps, lam, lam_hat, 0.2,
                                 0.8 <= lam_hat / lam <= 1.2, ratio=lam_hat / lam))
    mc = cfg.mc
    if not mc.enabled:
        out["monte_carlo"] = _skipped("disabled in config")
    else:
        runs = []
        for eps in cfg.eps:
            if eps < mc.eps_min:
                runs.append({"eps": eps, **_skipped(f"eps below mc.eps_min={mc.eps_min}")})
                continue
            ex = mc_exit_extrapolated(pot, curve, eps, mc.x0, mc.dt_levels, mc.n_paths, mc.seed,
                                      max_steps=mc.step_budget, threads=threads)
            u_asym = float(mean_exit_time(exp, eps, np.asarray(mc.x0)))
            tol = max(3 * ex.stderr / ex.mean, mc.rel_tolerance)
            rows.append(_row("u_asymptotic_vs_monte_carlo", eps, u_asym, ex.mean, tol,
                             abs(u_asym - ex.mean) <= tol * ex.mean, stderr=ex.stderr))
            if radial and np.allclose(mc.x0, 0):
                exact = radial_bvp(prof, radius, eps, cfg.bvp_grid).u0_reference
                if exact is not None:
                    rows.append(_row("monte_carlo_vs_exact", eps, ex.mean, exact, 3 * ex.stderr / exact,
                                     abs(ex.mean - exact) <= 3 * ex.stderr, stderr=ex.stderr))
            runs.append({"eps": eps, "extrapolated_mean": ex.mean, "extrapolated_stderr": ex.stderr,
                         "coarse": ex.coarse.summary(), "fine": ex.fine.summary(),
                         "overruns": ex.coarse.n_overrun + ex.fine.n_overrun})
        out["monte_carlo"] = runs
    return out


def run(cfg: RunConfig, stage: str = "report", out_dir: Path | None = None,
        threads: int | None = None) -> dict:
    """Run the pipeline up to ``stage`` and return the report dictionary.

    Failures in one eps entry are recorded in that entry and do not abort
    the others. Assumption failures abort the run.
    """
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    curve, pot = _setup(cfg)
    report: dict = {
        "schema": SCHEMA,
        "stage": stage,
        "config": cfg.raw,
        "provenance": {
            "package_version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "seed": cfg.mc.seed, "grid_size": curve.grid_size,
            "bvp_grid": cfg.bvp_grid, "eigen_grid": cfg.eigen_grid,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
        "inspect": None, "layers": None, "entries": None, "validation": None,
    }
    report["inspect"] = _inspect(cfg, curve, pot)
    if stage == "inspect":
        for key in ("layers", "entries", "validation"):
            report[key] = _skipped("not part of stage 'inspect'")
        return _clean(report)
    exp = build_expansion(curve, pot, cfg.order, delta=cfg.delta)
    report["layers"] = {"order": exp.order, "delta": exp.cutoff.delta,
                        "phi_degrees": [p.degree for p in exp.phis],
                        "u_degrees": [u.degree for u in exp.us[:exp.order]],
                        "dphi_dzeta_at_0_mean": [float(np.mean(p.zeta_slope)) for p in exp.phis],
                        "du_dzeta_at_0_mean": [float(np.mean(u.zeta_slope)) for u in exp.us]}
    if out_dir is not None and stage in ("expand", "report"):
        out_dir.mkdir(parents=True, exist_ok=True)
        _layer_csv(exp, out_dir / "layers.csv")
    if stage in ("evaluate", "report"):
        entries = []
        for eps in cfg.eps:
            try:
                entries.append(_entry(exp, cfg, eps))
            except (NumericalError, ArithmeticError, DomainRangeError) as exc:
                log.warning("eps=%g failed: %s", eps, exc)
                entries.append({"eps": eps, "error": f"{type(exc).__name__}: {exc}"})
        report["entries"] = entries
    else:
        report["entries"] = _skipped(f"not part of stage {stage!r}")
    if stage in ("validate", "report"):
        report["validation"] = _validate(cfg, curve, pot, exp, threads)
    else:
        report["validation"] = _skipped(f"not part of stage {stage!r}")
    return _clean(report)


def _summary(report: dict) -> str:
    lines = [f"exitwell {report['stage']}  (schema {report['schema']})"]
    geo = report["inspect"]["geometry"]
    asm = report["inspect"]["assumptions"]
    lines.append(f"domain {geo['kind']}: length={geo['length']:.6g} area={geo['area']:.6g} "
                 f"kappa in [{geo['curvature_min']:.4g}, {geo['curvature_max']:.4g}] "
                 f"collar={geo['collar_depth']:.4g}")
    lines.append(f"assumptions ok={asm['ok']} c1={asm['c1']:.4g} c2={asm['c2']:.4g} "
                 f"theta_min={asm['theta_min']:.6g}")
    entries = report.get("entries")
    if isinstance(entries, list):
        lines.append(f"{'eps':>6} {'lambda':>14} {'K_exp':>14} {'K_pow':>11} {'K':>14}")
        for e in entries:
            if e.get("error"):
                lines.append(f"{e['eps']:>6g}  error: {e['error']}")
                continue
            lam, kexp = e["lambda"]["value"], e["K_exp"]["value"]
            fmt = lambda v: f"{v:14.6e}" if v is not None else f"{'(log only)':>14}"
            lines.append(f"{e['eps']:>6g} {fmt(lam)} {fmt(kexp)} {e['K_pow']:11.4e} {fmt(e['K'])}")
    val = report.get("validation")
    if isinstance(val, dict) and "comparisons" in val:
        for r in val["comparisons"]:
            verdict = "PASS" if r["pass"] else "FAIL"
            rel = f"{r['rel_error']:.3e}" if r["rel_error"] is not None else "-"
            lines.append(f"[{verdict}] {r['name']} eps={r['eps']} value={r['asymptotic']:.6g} "
                         f"oracle={r['oracle']:.6g} rel={rel} tol={r['tolerance']:.3g}")
    return "\n".join(lines)


def _write_scalars(report: dict, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "lambda", "log_lambda", "K_exp", "log_K_exp", "K_pow", "K",
                    "torsional_rigidity", "error"])
        for e in report["entries"]:
            if e.get("error"):
                w.writerow([e["eps"], "", "", "", "", "", "", "", e["error"]])
                continue
            w.writerow([e["eps"], e["lambda"]["value"], e["lambda"]["log_abs"],
                        e["K_exp"]["value"], e["K_exp"]["log_abs"], e["K_pow"], e["K"],
                        e["torsional_rigidity"], ""])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="exitwell", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=STAGES)
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", help="output directory (overrides EXITWELL_OUT and the config)")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed override")
    parser.add_argument("--threads", type=int, help="worker threads for Monte Carlo")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, mc=replace(cfg.mc, seed=args.seed))
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = Path(args.out or os.environ.get("EXITWELL_OUT") or cfg.output_dir)
        report = run(cfg, args.command, out_dir, args.threads)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{args.command}.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n")
        if isinstance(report.get("entries"), list):
            _write_scalars(report, out_dir / "scalars.csv")
        print(_summary(report))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AssumptionError as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ExitwellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
