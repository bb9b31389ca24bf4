"""Command-line harness: config parsing, experiment dispatch, report emission.

Subcommands mirror the experiment suite; each one loads an optional TOML
config, validates it against the documented schema (unknown keys are
rejected with suggestions), runs the measurement, writes CSV/JSON/SVG
reports, and exits 0 on success, 1 on a failed certificate, 2 on a
configuration error, 3 on a numerical failure.
"""

import argparse
import difflib
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:            # Python 3.10
    import tomli as tomllib

from .grid import make_grid, ConfigurationError
from .model import (ModelSpec, SymbolSpec, PotentialSpec,
                    validate_symbol, validate_potential)
from .solvers import NumericalError
from .funcalc import BumpFunction
from .reports import config_hash, emit_report, aggregate_reports
from . import experiments as X
from . import __version__

_SCHEMA = {
    "seed": int,
    "threads": int,
    "model": {
        "symbol": str, "m": float, "coeffs": list,
        "potential": str, "c": float, "mu": float,
    },
    "grid": {"n": int, "length": float, "points": int},
    "solver": {"tol": float, "method": str, "preconditioner": bool},
    "output": {"directory": str, "plots": bool},
    "experiment": dict,     # free-form, validated per subcommand
}


def parse_config(path_or_text):
    """Parse and validate a TOML config; collects every violation."""
    if os.path.exists(path_or_text):
        with open(path_or_text, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        raw = tomllib.loads(path_or_text)
    errors = []

    def check(section, schema, prefix=""):
        for key, val in section.items():
            if key not in schema:
                hint = difflib.get_close_matches(key, schema.keys(), n=1)
                suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
                errors.append(f"unknown key {prefix}{key!r}{suffix}")
                continue
            want = schema[key]
            if isinstance(want, dict) and want is not dict:
                if not isinstance(val, dict):
                    errors.append(f"{prefix}{key} must be a table")
                else:
                    check(val, want, prefix=f"{prefix}{key}.")
            elif want is float:
                if not isinstance(val, (int, float)):
                    errors.append(f"{prefix}{key} must be a number")
            elif want is not dict and not isinstance(val, want):
                errors.append(f"{prefix}{key} must be {want.__name__}")

    check(raw, _SCHEMA)
    if errors:
        raise ConfigurationError("; ".join(errors))
    return raw


def build_model(cfg):
    m = cfg.get("model", {})
    sym = SymbolSpec(m.get("symbol", "power"), m.get("m", 1.0),
                     coeffs=tuple(m.get("coeffs", ())))
    pot = PotentialSpec(m.get("potential", "repulsive"),
                        c=m.get("c", 1.0), mu=m.get("mu", 1.0))
    model = ModelSpec(sym, pot)
    srep = validate_symbol(sym)
    if not srep.ok:
        raise ConfigurationError("symbol validation failed: " + "; ".join(srep.failures))
    prep = validate_potential(pot)
    if not prep.ok and not prep.contrast_mode:
        raise ConfigurationError("potential validation failed: " + "; ".join(prep.failures))
    return model, srep, prep


def build_grid(cfg, default_length, default_points):
    g = cfg.get("grid", {})
    return make_grid(g.get("n", 1), g.get("length", default_length),
                     g.get("points", default_points))


def _ctx(cfg, args):
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    threads = args.threads or cfg.get("threads", 0) or \
        int(os.environ.get("FRACDECAY_THREADS", "1"))
    return X.ExperimentContext(seed=seed, threads=threads), seed


def _series_rows(series):
    walls = series.metadata.get("wall_times", [0.0] * len(series.values))
    return [(float(p), float(n), float(e), float(w))
            for p, n, e, w in zip(series.values, series.norms,
                                  series.error_estimates, walls)]


def _finish(args, cfg, name, rows, summary, fit=None):
    outdir = args.out or cfg.get("output", {}).get("directory", "fracdecay_out")
    plots = cfg.get("output", {}).get("plots", True)
    quick = bool(getattr(args, "quick", False))
    if quick:
        summary = dict(summary)
        summary["notes"] = list(summary.get("notes", [])) + ["quick smoke-scale run"]
    paths = emit_report(outdir, name, rows, summary, plot=plots, plot_fit=fit,
                        inconclusive_if_empty=name not in ("validate", "ad-check"))
    certs = summary.get("certificates", {})
    ok = all(certs.values()) and not summary.get("inconclusive", False)
    status = ("SMOKE-" if quick else "") + ("PASS" if ok else "FAIL")
    print(f"[{name}] {status} " + " ".join(f"{k}={v}" for k, v in certs.items()))
    print(f"  report: {paths['json']}")
    if quick:
        return 0
    return 0 if ok else 1


# ------------------------- experiment commands -------------------------

def cmd_validate(args, cfg):
    model, srep, prep = build_model(cfg)
    summary = {
        "config_hash": config_hash(cfg), "seed": cfg.get("seed", 0),
        "parameters": {"mu_prime": model.mu_prime},
        "values": {"symbol_constants": srep.constants, "potential_constants": prep.constants},
        "certificates": {"symbol_ok": srep.ok,
                         "potential_ok": prep.ok or prep.contrast_mode},
        "notes": srep.failures + prep.failures,
    }
    return _finish(args, cfg, "validate", [], summary)


def cmd_decay(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    quick = args.quick
    grid = build_grid(cfg, 400.0, 512 if quick else 2048)
    ctx, seed = _ctx(cfg, args)
    t_grid = np.geomspace(e.get("t_min", 5.0), e.get("t_max", 50.0),
                          e.get("t_count", 8 if quick else 16))
    s = e.get("s", 3.0)
    a = e.get("a", 0.0)
    series, fit, fit_half = X.run_decay(model, grid, s, t_grid, a=a, ctx=ctx)
    thresh = e.get("slope_threshold",
                   0.4 if model.potential.sign == "zero" else 1.5)
    slope = -fit.exponent if fit else float("nan")
    flat_ok = True
    if fit and fit_half:
        flat_ok = (-fit_half.exponent) >= min(slope, thresh) - 0.2
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"s": s, "a": a, "grid": grid.key(), "t_grid": t_grid},
        "fit": vars(fit) if fit else None,
        "values": {"decay_exponent": slope,
                   "half_window_exponent": -fit_half.exponent if fit_half else None,
                   "wrap_valid": series.valid},
        "certificates": {"slope_ok": bool(fit and slope >= thresh),
                         "halving_stable": bool(flat_ok)},
        "inconclusive": fit is None,
    }
    return _finish(args, cfg, "decay", _series_rows(series), summary, fit)


def cmd_agmon(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    quick = args.quick
    grid = build_grid(cfg, 204.8 if quick else 819.2, 512 if quick else 2048)
    ctx, seed = _ctx(cfg, args)
    psi = BumpFunction.mourre_window()
    lam_grid = 2.0 ** -np.arange(*e.get("lam_exp_range", (2, 6) if quick else (3, 8)))
    target = e.get("target_slope", 3.0)
    c = e.get("c", 0.0)
    if not c:
        c = X.agmon_bisect_c(model, grid, psi, e.get("bisect_weight", 2),
                             lam_grid, ctx=ctx, target_slope=target + 0.2)
    engine = e.get("engine", "transfer")
    certs, values, rows, fit0 = {}, {"c": c}, [], None
    for lw in e.get("l_weights", (0, 2)):
        series, fit, _ = X.run_agmon(model, grid, psi, lw, c, lam_grid,
                                     ctx=ctx, engine=engine)
        certs[f"outer_slope_L{lw}"] = bool(fit.exponent >= target)
        certs[f"outer_r2_L{lw}"] = bool(fit.r2 >= e.get("r2_threshold", 0.95))
        values[f"outer_slope_L{lw}"] = fit.exponent
        values[f"outer_r2_L{lw}"] = fit.r2
        if lw == e.get("l_weights", (0, 2))[0]:
            rows, fit0 = _series_rows(series), fit
        eps = e.get("inner_eps", 0.5 / model.potential.mu * 0.8)
        iseries, ifit, _ = X.run_agmon(model, grid, psi, lw, c, lam_grid, ctx=ctx,
                                       engine=engine, inner_eps=eps)
        certs[f"inner_slope_L{lw}"] = bool(ifit.exponent >= target)
        values[f"inner_slope_L{lw}"] = ifit.exponent
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"grid": grid.key(), "lam_grid": lam_grid, "engine": engine},
        "fit": vars(fit0) if fit0 else None,
        "values": values, "certificates": certs,
    }
    return _finish(args, cfg, "agmon", rows, summary, fit0)


def cmd_lap_low(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 200.0 if args.quick else 800.0, 512 if args.quick else 2048)
    ctx, seed = _ctx(cfg, args)
    N_pow, gamma = e.get("resolvent_power", 1), e.get("gamma", 1.0)
    z_grid = e.get("z_grid", [0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5])
    lam_grid = 2.0 ** -np.arange(*e.get("lam_exp_range", (2, 7)))
    cert, scaling = X.run_lap_low(model, grid, N_pow, gamma, z_grid, ctx=ctx,
                                  lam_grid=lam_grid)
    alpha = scaling["alpha"]
    certs = {
        "eps_ratio_ok": bool(cert["max_probe_ratio"] <= e.get("ratio_threshold", 1.1)),
        "scaling_slope_ok": bool(scaling["fit"].exponent >= alpha - 0.3),
        "conclusive": bool(cert["conclusive"]),
    }
    rows = _series_rows(scaling["series"])
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"N": N_pow, "gamma": gamma, "grid": grid.key(), "z_grid": z_grid},
        "fit": vars(scaling["fit"]),
        "values": {"alpha": alpha, "table": cert["table"],
                   "max_norm": cert["max_norm"],
                   "max_probe_ratio": cert["max_probe_ratio"]},
        "certificates": certs,
        "inconclusive": not cert["conclusive"],
    }
    return _finish(args, cfg, "lap-low", rows, summary, scaling["fit"])


def cmd_lap_high(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 100.0 if args.quick else 400.0, 512 if args.quick else 2048)
    ctx, seed = _ctx(cfg, args)
    gamma = e.get("gamma", 1.0)
    z_grid = e.get("z_grid", [4.0, 8.0, 16.0, 32.0, 64.0])
    certs, values, rows = {}, {}, []
    for N_pow in e.get("resolvent_powers", (1, 2)):
        res = X.run_lap_high(model, grid, N_pow, gamma, z_grid, ctx=ctx)
        certs[f"flat_N{N_pow}"] = bool(res["flatness"] < e.get("flatness_threshold", 2.0))
        values[f"N{N_pow}"] = res
        if not rows:
            rows = [(r["abs_z"], r["norm"], 0.0, 0.0) for r in res["rows"]]
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"gamma": gamma, "grid": grid.key(), "z_grid": z_grid},
        "values": values, "certificates": certs,
    }
    return _finish(args, cfg, "lap-high", rows, summary)


def cmd_mourre(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 48.0, 256 if args.quick else 512)
    ctx, seed = _ctx(cfg, args)
    h_grid = e.get("h_grid", [0.3, 0.2, 0.1])
    cutoff = e.get("rank_cutoff", 0.7)
    res = X.run_mourre(model, grid, h_grid, ctx=ctx, rank_cutoff=cutoff)
    sens = {str(c): X.run_mourre(model, grid, h_grid, ctx=ctx, rank_cutoff=c)["a0"]
            for c in e.get("cutoff_sensitivity", (0.5, 0.9))}
    certs = {"positive": res["positive"],
             "stable": bool(res["stability"] <= e.get("stability_threshold", 2.0))}
    rows = [(r["h"], r["min_eig_over_h"], 0.0, 0.0) for r in res["rows"]]
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"h_grid": h_grid, "rank_cutoff": cutoff, "grid": grid.key()},
        "values": {"a0": res["a0"], "stability": res["stability"], "rows": res["rows"],
                   "cutoff_sensitivity": sens},
        "certificates": certs,
    }
    return _finish(args, cfg, "mourre", rows, summary)


def cmd_commutators(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 24.0, 256 if args.quick else 512)
    ctx, seed = _ctx(cfg, args)
    h_grid = e.get("h_grid", [0.4, 0.3, 0.2, 0.15, 0.1, 0.07])
    j_list = e.get("j_list", [1, 2, 3])
    res = X.run_commutator_scaling(model, grid, j_list, h_grid, ctx=ctx)
    tol_j = e.get("slope_tolerance", 0.3)
    certs = {f"slope_j{j}": bool(abs(res[j]["fit"].exponent - j) <= tol_j)
             for j in j_list if j <= 2}
    rows = _series_rows(res[j_list[0]]["series"])
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"h_grid": h_grid, "j_list": j_list, "grid": grid.key()},
        "values": {f"slope_j{j}": res[j]["fit"].exponent for j in j_list},
        "certificates": certs,
    }
    return _finish(args, cfg, "commutators", rows, summary, res[j_list[0]]["fit"])


def cmd_virial(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    ctx, seed = _ctx(cfg, args)
    boxes = e.get("box_lengths", [50.0, 100.0])
    npts = e.get("points", 512 if args.quick else 1024)
    res = X.run_virial(model, boxes, npts, ctx=ctx)
    eigs = [r["min_eig"] for r in res["rows"]]
    if model.potential.sign == "repulsive":
        certs = {"positive": bool(all(v > 0 for v in eigs)),
                 "decreasing": bool(all(np.diff(eigs) < 0)),
                 "form_ratio": bool(abs(res["min_form_ratio"] / res["virial_constant"] - 1.0) <= 0.2
                                    or res["min_form_ratio"] >= res["virial_constant"])}
    else:
        stable = abs(eigs[0] - eigs[-1]) <= 0.01 * abs(eigs[0])
        certs = {"negative_eigenvalue": bool(eigs[0] < -1e-3),
                 "stable": bool(stable)}
    rows = [(r["L"], abs(r["min_eig"]), 0.0, 0.0) for r in res["rows"]]
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"box_lengths": boxes, "points": npts},
        "values": res, "certificates": certs,
    }
    return _finish(args, cfg, "virial", rows, summary)


def cmd_riesz(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 64.0, 128)
    ctx, seed = _ctx(cfg, args)
    from .operators import OperatorHandle
    from .weylcalc import riesz_symbol_table, seminorm_estimate, p_plus_lambda_table
    lam_grid = e.get("lam_grid", [0.0, 0.1, 0.5, 1.0])
    pairs = [(al, be) for al in range(3) for be in range(3 - al)]
    op = OperatorHandle(grid, model)
    per_lam, ratios = {}, {}
    for lam in lam_grid:
        tab, info = riesz_symbol_table(op, lam)
        wgt = 1.0 / np.real(p_plus_lambda_table(model, grid, lam, order=0).values)
        vals = {f"{al}{be}": seminorm_estimate(tab, wgt, al, be, model.mu_prime)
                for al, be in pairs}
        per_lam[str(lam)] = {"seminorms": vals, "condition": info["condition_number"]}
        ratios[lam] = max(vals.values())
    variation = max(ratios.values()) / min(ratios.values())
    certs = {"finite": bool(all(np.isfinite(list(v["seminorms"].values())).all()
                                for v in per_lam.values())),
             "uniform": bool(variation < e.get("variation_threshold", 3.0))}
    rows = [(lam if lam > 0 else 1e-6, ratios[lam], 0.0, 0.0) for lam in lam_grid]
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"grid": grid.key(), "lam_grid": lam_grid},
        "values": {"per_lambda": per_lam, "class_seminorm_variation": variation},
        "certificates": certs,
    }
    return _finish(args, cfg, "riesz", rows, summary)


def cmd_spectral_derivative(args, cfg):
    model, _, _ = build_model(cfg)
    e = cfg.get("experiment", {})
    grid = build_grid(cfg, 200.0 if args.quick else 800.0, 512 if args.quick else 2048)
    ctx, seed = _ctx(cfg, args)
    N_pow, gamma = e.get("resolvent_power", 1), e.get("gamma", 1.0)
    lam_grid = 2.0 ** -np.arange(*e.get("lam_exp_range", (2, 7)))
    series, fit, alpha = X.run_spectral_derivative(model, grid, N_pow, gamma,
                                                   lam_grid, ctx=ctx)
    certs = {"slope_ok": bool(fit.exponent >= alpha - 0.3),
             "vanishing": bool(series.norms[0] < series.norms[-1])}
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"N": N_pow, "gamma": gamma, "grid": grid.key()},
        "fit": vars(fit),
        "values": {"alpha": alpha},
        "certificates": certs,
    }
    return _finish(args, cfg, "spectral-derivative", _series_rows(series), summary, fit)


def cmd_ad_check(args, cfg):
    e = cfg.get("experiment", {})
    ctx, seed = _ctx(cfg, args)
    trials = e.get("trials", 100)
    dim = e.get("dim", 6)
    worst = 0.0
    records = {}
    for j in range(1, e.get("j_max", 3) + 1):
        for ell in range(1, e.get("ell_max", 2) + 1):
            dev, rec = X.check_ad_identities(j, ell, dim=dim, trials=trials, ctx=ctx)
            worst = max(worst, dev)
            records[f"j{j}_ell{ell}"] = rec
    certs = {"identities_exact": bool(worst <= e.get("tolerance", 1e-10))}
    summary = {
        "config_hash": config_hash(cfg), "seed": seed,
        "parameters": {"dim": dim, "trials": trials},
        "values": {"max_deviation": worst, "records": records},
        "certificates": certs,
    }
    return _finish(args, cfg, "ad-check", [], summary)


def cmd_report(args, cfg):
    from pathlib import Path
    outdir = Path(args.out or cfg.get("output", {}).get("directory", "fracdecay_out"))
    paths = sorted(outdir.glob("**/*_summary.json"))
    if not paths:
        print(f"no summaries found under {outdir}")
        return 1
    agg = aggregate_reports(paths)
    width = max(len(r["experiment"]) for r in agg["runs"])
    for r in agg["runs"]:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{r['experiment']:<{width}}  {mark}  {r['path']}")
    print(f"overall: {'PASS' if agg['all_pass'] else 'FAIL'}")
    return 0 if agg["all_pass"] else 1


_COMMANDS = {
    "validate": cmd_validate,
    "decay": cmd_decay,
    "agmon": cmd_agmon,
    "lap-low": cmd_lap_low,
    "lap-high": cmd_lap_high,
    "mourre": cmd_mourre,
    "commutators": cmd_commutators,
    "virial": cmd_virial,
    "riesz": cmd_riesz,
    "spectral-derivative": cmd_spectral_derivative,
    "ad-check": cmd_ad_check,
    "report": cmd_report,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fracdecay",
        description="Desk-scale verification harness for fractional Schrodinger "
                    "operators with slowly decaying repulsive potentials.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=0)
        p.add_argument("--quick", action="store_true", help="smoke-scale grids")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PermissionError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
