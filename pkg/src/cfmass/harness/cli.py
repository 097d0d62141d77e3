"""Command line entry point.

Exit codes: 0 when every checked inequality holds, 1 for a bad
configuration, 2 when a solver fails, 3 when an inequality or consistency
check is violated (which signals a defect, since the statements are theorems).
A violation takes precedence over a solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from ..conformal import HarmonicMetricFactor, alpha_min, mass_identity
from ..errors import CFMassError, ConfigError
from ..geom import Sphere
from ..imcf import capacity_bound_from_flow, flow_axisym, monotonicity_audit, sphere_trace
from ..radial import RadialFactor, make_radial_cf, radial_report, schwarzschild_capacity
from .config import RUN_DEFAULTS, load_config, validate
from .report import (CSV_HEADER, EQ_TOL, SCHEMA_VERSION, _bem_level, _oracle, build_surface,
                     convergence_study, run_case)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VIOLATION = 0, 1, 2, 3
COMMANDS = ("capacity", "harmonic-metric", "imcf", "radial", "check", "convergence", "schwarzschild")


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):
        return _clean(x.item())
    return x


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _write_csv(out, name, header, rows):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return path


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def _load(args, default_cases):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = validate({"case": default_cases})
    run = dict(cfg.run)
    if args.seed is not None:
        run["seed"] = args.seed
    if args.tol is not None:
        run["tol"] = args.tol
    out = args.out or os.environ.get("CFMASS_OUT") or run["out"]
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    return cfg, run, out, base


def _header(command, args, run):
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "config": os.path.basename(args.config) if args.config else None,
            "run": {k: run[k] for k in sorted(run) if k != "out"}}


# ---------------------------------------------------------------- commands

def _run_reports(cfg, run, base):
    workers = min(int(run["workers"]), len(cfg.cases))
    if workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(workers, mp_context=ctx) as ex:
            return list(ex.map(run_case, cfg.cases, [run] * len(cfg.cases), [base] * len(cfg.cases)))
    return [run_case(c, run, base) for c in cfg.cases]


def cmd_check(args):
    cfg, run, out, base = _load(args, [
        {"name": "unit-sphere", "surface": {"kind": "sphere", "radius": 1.0}, "factor": {"kind": "harmonic"}}])
    reports = _run_reports(cfg, run, base)
    doc = _header("check", args, run)
    doc["cases"] = [r.to_dict() for r in reports]
    doc["summary"] = {r.case: r.status for r in reports}
    if args.format == "json":
        _write(out, "report.json", _dump(_clean(doc)))
    for r in reports:
        _write_csv(out, f"{_safe(r.case)}.csv", CSV_HEADER, r.csv_rows())
    for r in reports:
        extra = f" ({r.error['type']}: {r.error['message']})" if r.error else (
            f" violations: {', '.join(r.violations)}" if r.violations else "")
        eq = [e.id for e in r.entries if e.equality]
        print(f"{r.case}: {r.status}; equality: {', '.join(eq) or 'none'}{extra}")
    if any(r.status == "violation" for r in reports):
        return EXIT_VIOLATION
    if any(r.status == "error" for r in reports):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_capacity(args):
    cfg, run, out, base = _load(args, [{"name": "unit-sphere", "surface": {"kind": "sphere"}}])
    rows = []
    status = EXIT_OK
    for c in cfg.cases:
        if c.surface["kind"] == "horizon":
            continue
        try:
            s = build_surface(c, base)
            b = _bem_level(s, c.level, False) if c.n == 3 else None
            oracle, how = _oracle(c, s) if c.n == 3 else (s.radius ** (c.n - 2), "closed-form")
            c0 = b.c0 if b is not None else oracle
            rel = None if oracle is None else c0 / oracle - 1.0
            rows.append({"case": c.name, "c0": c0, "panels": b.panels if b else 0, "oracle": oracle,
                         "oracle_provenance": how, "relative_error": rel})
            if rel is not None and abs(rel) > 1e-2:
                status = EXIT_VIOLATION
        except CFMassError as exc:
            rows.append({"case": c.name, "error": f"{type(exc).__name__}: {exc}"})
            status = max(status, EXIT_SOLVER)
    return _emit(args, out, "capacity", run, rows, status)


def cmd_harmonic(args):
    cfg, run, out, base = _load(args, [
        {"name": "unit-sphere", "surface": {"kind": "sphere"}, "factor": {"kind": "harmonic"}}])
    rows = []
    status = EXIT_OK
    for c in cfg.cases:
        if c.factor["kind"] != "harmonic":
            continue
        try:
            s = build_surface(c, base)
            f = HarmonicMetricFactor(s, level=c.level)
            mi = mass_identity(f)
            rows.append({"case": c.name, "mass": f.mass, "alpha": alpha_min(f), "panels": f.mesh.n_faces,
                         "mass_identity": mi.rhs, "mass_identity_method": mi.method})
            f.density.to_csv(_csv_path(out, f"{_safe(c.name)}_density.csv"))
            if abs(mi.rhs / f.mass - 1.0) > 1e-2:
                status = EXIT_VIOLATION
        except CFMassError as exc:
            rows.append({"case": c.name, "error": f"{type(exc).__name__}: {exc}"})
            status = max(status, EXIT_SOLVER)
    return _emit(args, out, "harmonic-metric", run, rows, status)


def cmd_imcf(args):
    cfg, run, out, base = _load(args, [
        {"name": "prolate", "surface": {"kind": "axisym", "coeffs": [1.0, 0.0, 0.3]}, "flow": {}}])
    rows = []
    status = EXIT_OK
    for c in cfg.cases:
        if c.surface["kind"] not in ("axisym", "sphere") or c.n != 3:
            continue
        fl = c.flow or {}
        dt = float(fl.get("dt", run["flow_dt"]))
        T = float(fl.get("T", run["flow_T"]))
        nodes = int(fl.get("nodes", run["flow_nodes"]))
        try:
            s = build_surface(c, base)
            if isinstance(s, Sphere):
                trace = sphere_trace(s.radius, 3, T)
            else:
                trace = flow_axisym(s, dt=dt, T=T, nodes=nodes)
            audit = monotonicity_audit(trace)
            bound = capacity_bound_from_flow(trace)
            trace.to_csv(_csv_path(out, f"{_safe(c.name)}_trace.csv"))
            rows.append({"case": c.name, "dt": dt, "T": T, "nodes": nodes, "audit_holds": audit.holds,
                         "area_law_error": audit.area_law_error, "lemma8_worst": audit.lemma8_worst,
                         "f_worst_step": audit.f_worst_step, "violations": list(audit.violations),
                         "bound_truncated": bound.truncated, "bound_with_tail": bound.with_tail})
            if not audit.holds:
                status = EXIT_VIOLATION
        except CFMassError as exc:
            rows.append({"case": c.name, "error": f"{type(exc).__name__}: {exc}"})
            status = max(status, EXIT_SOLVER)
    return _emit(args, out, "imcf", run, rows, status)


def _csv_path(out, name):
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


def _radial_row(name, f, tol):
    q = radial_report(f, tol=tol)
    row = {"case": name, "n": q.n, "mass": q.mass, "alpha": q.alpha, "c_g": q.c_g, "c0": q.c0,
           "tmc_normalized": q.tmc_normalized, "r0": f.r0,
           "flags": {"Thm1a": abs(q.mass - q.c_g) / q.mass < EQ_TOL,
                     "I-upper": abs(q.c0 + q.mass / 2 - q.c_g) / q.c_g < EQ_TOL,
                     "IV": abs(q.mass / 2 - q.c0) / q.c0 < EQ_TOL,
                     "III": abs(q.mass / q.alpha - q.tmc_normalized) / q.tmc_normalized < EQ_TOL}}
    holds = q.c_g <= q.mass * (1 + EQ_TOL) and q.c0 <= q.mass / 2 * (1 + EQ_TOL) and \
        q.tmc_normalized <= q.mass / q.alpha * (1 + EQ_TOL) and q.c_g <= (q.c0 + q.mass / 2) * (1 + EQ_TOL)
    return row, holds


def cmd_radial(args):
    if args.config:
        cfg, run, out, base = _load(args, None)
        cases = [c for c in cfg.cases if c.factor["kind"] in ("radial", "schwarzschild")]
    else:
        n = args.n or 3
        cfg, run, out, base = _load(args, [{"name": f"radial-n{n}", "n": n, "surface": {"kind": "horizon"},
                                            "factor": {"kind": "radial", "a": args.a, "b": args.b}}])
        cases = cfg.cases
    rows, status = [], EXIT_OK
    for c in cases:
        try:
            n = args.n or c.n
            if c.factor["kind"] == "schwarzschild":
                f = RadialFactor.schwarzschild(n, float(c.factor.get("mass", 2.0)))
            else:
                f = make_radial_cf(n, float(c.factor.get("a", 1.0)), float(c.factor.get("b", 0.0)))
            row, holds = _radial_row(c.name, f, run["tol"])
            rows.append(row)
            if not holds:
                status = EXIT_VIOLATION
        except CFMassError as exc:
            rows.append({"case": c.name, "error": f"{type(exc).__name__}: {exc}"})
            status = max(status, EXIT_SOLVER)
    return _emit(args, out, "radial", run, rows, status)


def cmd_schwarzschild(args):
    n = args.n or 3
    tol = args.tol or 1e-8
    m = args.mass
    out = args.out or os.environ.get("CFMASS_OUT") or RUN_DEFAULTS["out"]
    run = {"n": n, "tol": tol, "mass": m}
    try:
        f = RadialFactor.schwarzschild(n, m)
        row, holds = _radial_row(f"schwarzschild-n{n}", f, 1e-12)
        row["c_g_example"] = schwarzschild_capacity(n, m)
        ok = abs(row["c_g_example"] - m) <= tol * max(1.0, m) and abs(row["c_g"] - m) <= tol * max(1.0, m)
        row["identity_holds"] = ok
        status = EXIT_OK if (ok and holds) else EXIT_VIOLATION
    except CFMassError as exc:
        row = {"case": f"schwarzschild-n{n}", "error": f"{type(exc).__name__}: {exc}"}
        status = EXIT_SOLVER
    return _emit(args, out, "schwarzschild", run, [row], status, header={"schema_version": SCHEMA_VERSION,
                                                                          "command": "schwarzschild", "run": run})


def cmd_convergence(args):
    cfg, run, out, base = _load(args, [
        {"name": "unit-sphere", "surface": {"kind": "sphere"}, "factor": {"kind": "harmonic"}}])
    tables, status = [], EXIT_OK
    for c in cfg.cases:
        try:
            tables.append(convergence_study(c, run["levels"], base))
        except CFMassError as exc:
            tables.append({"case": c.name, "error": f"{type(exc).__name__}: {exc}"})
            status = EXIT_SOLVER
    doc = _header("convergence", args, run)
    doc["tables"] = tables
    if args.format == "json":
        _write(out, "convergence.json", _dump(_clean(doc)))
    for t in tables:
        if "rows" not in t:
            print(f"{t['case']}: {t['error']}")
            continue
        keys = sorted({k for r in t["rows"] for k in r})
        _write_csv(out, f"{_safe(t['case'])}_convergence.csv", keys, [[r.get(k) for k in keys] for r in t["rows"]])
        print(f"{t['case']}:")
        for r in t["rows"]:
            vals = ", ".join(f"{k}={r[k]:.6g}" for k in ("c0", "mass", "c_g")
                             if isinstance(r.get(k), float))
            print(f"  level {r['level']}: {vals}")
    return status


def _emit(args, out, command, run, rows, status, header=None):
    doc = header or _header(command, args, run)
    doc["results"] = rows
    text = _dump(_clean(doc))
    name = command.replace("-", "_")
    if args.format == "json":
        _write(out, f"{name}.json", text)
    else:
        keys = sorted({k for r in rows for k in r})
        _write_csv(out, f"{name}.csv", keys, [[json.dumps(_clean(r[k]), sort_keys=True)
                                               if isinstance(r.get(k), (dict, list)) else _clean(r.get(k))
                                               for k in keys] for r in rows])
    sys.stdout.write(text)
    return status


def build_parser():
    p = argparse.ArgumentParser(prog="cfmass", description="Capacity, mass and curvature inequality checks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML experiment configuration")
        s.add_argument("--out", help="output directory")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--n", type=int, help="dimension for radial and schwarzschild runs")
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float)
        if name == "schwarzschild":
            s.add_argument("--mass", type=float, default=2.0)
        if name == "radial":
            s.add_argument("--a", type=float, default=1.0)
            s.add_argument("--b", type=float, default=-0.05)
    return p


HANDLERS = {"capacity": cmd_capacity, "harmonic-metric": cmd_harmonic, "imcf": cmd_imcf,
            "radial": cmd_radial, "check": cmd_check, "convergence": cmd_convergence,
            "schwarzschild": cmd_schwarzschild}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.n is not None and args.n < 3:
        print("error: --n must be >= 3", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        for key in exc.keys:
            print(f"  offending key: {key}", file=sys.stderr)
        return EXIT_CONFIG


__all__ = ["COMMANDS", "build_parser", "main"]
