"""Per-case evaluation of every inequality, with provenance and equality flags.

Each inequality is stored as ``lhs <= rhs`` with ``margin = rhs - lhs`` and
``relative = margin / max(|lhs|, |rhs|)``.  A relative margin below
``EQ_TOL`` in absolute value marks an equality (rigidity) candidate; one
below ``-EQ_TOL`` is a violation.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..conformal import (HarmonicMetricFactor, RadialConformalFactor, SchwarzschildFactor,
                         energy_capacity, lemma6_check, mass_identity, superharmonicity_check)
from ..errors import CFMassError, ConfigError
from ..geom import (AxisymProfile, Ellipsoid, Sphere, SurfaceUnion, TriMesh, ball_volume,
                    cotan_mean_curvature, load_obj, mesh_surface, panel_mean_curvature,
                    sphere_area)
from ..imcf import capacity_bound_from_flow, flow_axisym, monotonicity_audit, sphere_trace
from ..potential import (LayerOperators, ellipsoid_capacity, richardson, robin_residual,
                         solve_capacity, solve_robin_harmonic_metric, two_sphere_capacity)
from ..radial import make_radial_cf, radial_mass_identity, radial_report
from .config import CaseSpec

EQ_TOL = 1e-3
SCHEMA_VERSION = 1
# tolerances of the numerical cross-checks (not theorems)
MASS_IDENTITY_TOL = 1e-2
ENERGY_TOL = 2e-2
ROBIN_TOL = 1e-2
RADIAL_IDENTITY_TOL = 1e-6


def _f(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class Quantity:
    value: float
    provenance: str

    def to_dict(self):
        return {"value": _f(self.value), "provenance": self.provenance}


@dataclass(frozen=True)
class InequalityEntry:
    """``lhs <= rhs`` as asserted by a theorem."""

    id: str
    lhs: float
    rhs: float
    lhs_provenance: str
    rhs_provenance: str
    strict: bool = False
    note: str = ""
    scale: float | None = None

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def relative(self):
        s = self.scale if self.scale is not None else max(abs(self.lhs), abs(self.rhs))
        return self.margin / s if s > 0 else 0.0

    @property
    def equality(self):
        return abs(self.relative) < EQ_TOL

    @property
    def holds(self):
        if self.strict:
            return self.relative > 0
        return self.relative >= -EQ_TOL

    def to_dict(self):
        return {"id": self.id, "lhs": _f(self.lhs), "rhs": _f(self.rhs), "margin": _f(self.margin),
                "relative_margin": _f(self.relative), "equality": bool(self.equality),
                "holds": bool(self.holds), "strict": self.strict,
                "provenance": {"lhs": self.lhs_provenance, "rhs": self.rhs_provenance},
                "note": self.note}


@dataclass(frozen=True)
class SandwichEntry:
    """``lhs <= middle <= rhs`` where only the right half is implied in general."""

    id: str
    lhs: float
    middle: float
    rhs: float
    provenance: dict
    note: str = ""

    def _rel(self, a, b):
        return (b - a) / max(abs(a), abs(b))

    @property
    def relative_left(self):
        return self._rel(self.lhs, self.middle)

    @property
    def relative_right(self):
        return self._rel(self.middle, self.rhs)

    @property
    def equality(self):
        return abs(self.relative_left) < EQ_TOL and abs(self.relative_right) < EQ_TOL

    @property
    def left_holds(self):
        return self.relative_left >= -EQ_TOL

    @property
    def holds(self):
        # the right half is a theorem; the left half is reported only
        return self.relative_right >= -EQ_TOL

    def to_dict(self):
        return {"id": self.id, "lhs": _f(self.lhs), "middle": _f(self.middle), "rhs": _f(self.rhs),
                "margin_left": _f(self.middle - self.lhs), "margin_right": _f(self.rhs - self.middle),
                "relative_margin_left": _f(self.relative_left),
                "relative_margin_right": _f(self.relative_right),
                "equality": bool(self.equality), "holds": bool(self.holds),
                "left_holds": bool(self.left_holds), "left_implied": False,
                "provenance": self.provenance, "note": self.note}


@dataclass(frozen=True)
class Check:
    """A numerical consistency check: ``value`` compared with ``limit``."""

    id: str
    value: float
    limit: float
    holds: bool
    provenance: str

    def to_dict(self):
        return {"id": self.id, "value": _f(self.value), "limit": _f(self.limit), "holds": bool(self.holds),
                "provenance": self.provenance}


@dataclass
class InequalityReport:
    case: str
    n: int
    surface: dict
    factor: dict
    quantities: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)
    error: dict | None = None

    def entry(self, id):
        for e in self.entries:
            if e.id == id:
                return e
        raise KeyError(id)

    def check(self, id):
        for c in self.checks:
            if c.id == id:
                return c
        raise KeyError(id)

    @property
    def violations(self):
        bad = [e.id for e in self.entries if not e.holds]
        return bad + [c.id for c in self.checks if not c.holds]

    @property
    def status(self):
        if self.error is not None:
            return "error"
        return "violation" if self.violations else "ok"

    def to_dict(self):
        return {
            "case": self.case, "n": self.n, "surface": self.surface, "factor": self.factor,
            "status": self.status,
            "quantities": {k: q.to_dict() for k, q in sorted(self.quantities.items())},
            "inequalities": [e.to_dict() for e in self.entries],
            "checks": [c.to_dict() for c in self.checks],
            "skipped": dict(sorted(self.skipped.items())),
            "violations": self.violations, "error": self.error,
        }

    def csv_rows(self):
        rows = []
        for e in self.entries:
            d = e.to_dict()
            if "middle" in d:
                rows.append([self.case, d["id"], d["lhs"], d["rhs"], d["margin_right"],
                             d["relative_margin_right"], d["equality"], d["holds"],
                             f"middle={d['middle']!r}; left_holds={d['left_holds']}; "
                             f"left half not implied"])
            else:
                rows.append([self.case, d["id"], d["lhs"], d["rhs"], d["margin"], d["relative_margin"],
                             d["equality"], d["holds"],
                             f"{d['provenance']['lhs']} | {d['provenance']['rhs']}"])
        return rows


CSV_HEADER = ["case", "inequality", "lhs", "rhs", "margin", "relative_margin", "equality", "holds", "provenance"]


# ---------------------------------------------------------------- builders

def build_surface(spec: CaseSpec, base_dir=None):
    s = spec.surface
    kind = s["kind"]
    if kind == "sphere":
        return Sphere(float(s.get("radius", 1.0)), spec.n, s.get("center"))
    if kind == "ellipsoid":
        a, b, c = (float(v) for v in s["axes"])
        return Ellipsoid(a, b, c, center=s.get("center"))
    if kind == "axisym":
        return AxisymProfile.from_cos_poly([float(v) for v in s["coeffs"]])
    if kind == "two_balls":
        r1, r2 = (float(v) for v in s["radii"])
        d = float(s["distance"])
        return SurfaceUnion((Sphere(r1, 3, (0.0, 0.0, 0.0)), Sphere(r2, 3, (d, 0.0, 0.0))))
    if kind == "obj":
        path = s["path"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_obj(path)
    if kind == "horizon":
        return None
    raise ConfigError(f"unknown surface kind {kind}", ["surface.kind"])


def build_radial(spec: CaseSpec):
    f = spec.factor
    if f["kind"] == "schwarzschild":
        return SchwarzschildFactor(float(f.get("mass", 2.0)), spec.n)
    return RadialConformalFactor(make_radial_cf(spec.n, float(f.get("a", 1.0)), float(f.get("b", 0.0))))


def _describe(spec):
    return dict(sorted(spec.surface.items())), dict(sorted(spec.factor.items()))


# ---------------------------------------------------------------- quantities

@dataclass
class _BemLevel:
    level: int
    panels: int
    c0: float
    mass: float | None = None
    alpha: float | None = None
    ops: object = None
    mesh: object = None
    capacity_density: object = None
    robin_density: object = None


def _bem_level(surface, level, robin):
    mesh = mesh_surface(surface, level)
    ops = LayerOperators(mesh)
    vd, c0 = solve_capacity(mesh, ops=ops)
    out = _BemLevel(level, mesh.n_faces, c0, ops=ops, mesh=mesh, capacity_density=vd)
    if robin:
        dens, m = solve_robin_harmonic_metric(mesh, ops=ops)
        out.mass = m
        out.alpha = float((1.0 + ops.S @ dens.q).min())
        out.robin_density = dens
    return out


def _extrapolated(coarse, fine, name):
    tag = f"bem(level {coarse.level}->{fine.level}, richardson p=2, panels={fine.panels})"
    return Quantity(richardson(getattr(coarse, name), getattr(fine, name)), tag)


def _surface_quantities(surface, n):
    omega = sphere_area(n)
    q = {}
    if isinstance(surface, TriMesh):
        H, w = cotan_mean_curvature(surface)
        q["area"] = Quantity(surface.area(), "mesh triangle sum")
        q["volume"] = Quantity(surface.enclosed_volume(), "mesh divergence theorem")
        q["tmc_normalized"] = Quantity(float(H @ w) / ((n - 1) * omega), "mesh cotangent curvature")
        return q
    how = "closed-form" if isinstance(surface, Sphere) else "quadrature"
    q["area"] = Quantity(surface.area(), how)
    q["volume"] = Quantity(surface.enclosed_volume(), how)
    q["tmc_normalized"] = Quantity(surface.total_mean_curvature() / ((n - 1) * omega), how)
    return q


def _umbilic_entry(surface, n):
    fld = surface.curvature()
    defect = fld.umbilic_defect()
    scale = float(np.max(fld.H ** 2))
    worst = float(defect.max()) / scale
    spread = float(np.abs(defect).max()) / scale
    # equality means umbilic at every node, not just at some
    note = "normalized by max H^2; equality iff every node is umbilic"
    e = InequalityEntry("Eq4.6", worst, 0.0, f"curvature field ({len(fld.H)} nodes)", "closed-form",
                        note=note, scale=1.0)
    if spread >= EQ_TOL and e.equality:
        e = InequalityEntry("Eq4.6", -spread, 0.0, f"curvature field ({len(fld.H)} nodes)", "closed-form",
                            note=note + "; reported lhs is -max|defect| since some nodes are not umbilic",
                            scale=1.0)
    return e


def _oracle(spec, surface):
    kind = spec.surface["kind"]
    if kind == "sphere" and spec.n == 3:
        return surface.radius, "closed-form"
    if kind == "ellipsoid":
        return ellipsoid_capacity(*surface.axes), "ellipsoidal quadrature"
    if kind == "two_balls":
        r1, r2 = spec.surface["radii"]
        return two_sphere_capacity(r1, r2, spec.surface["distance"], tol=1e-12), "image-charge series"
    return None, None


def _geometric_entries(rep, q, n, convex, surface):
    T = q["tmc_normalized"]
    C0 = q["c0"]
    A = q["area"]
    V = q["volume"]
    omega = sphere_area(n)
    beta = ball_volume(n)
    rep.entries.append(InequalityEntry("II", C0.value, T.value, C0.provenance, T.provenance))
    rep.entries.append(InequalityEntry("Thm2a", C0.value, T.value, C0.provenance, T.provenance))
    vb = (V.value / beta) ** ((n - 2) / n)
    rep.entries.append(InequalityEntry("Eq5.1", vb, C0.value, V.provenance, C0.provenance))
    if convex:
        ab = (A.value / omega) ** ((n - 2) / (n - 1))
        note = "outer-minimizing assumed from convexity"
        rep.entries.append(InequalityEntry("V", ab, T.value, A.provenance, T.provenance, note=note))
        rep.entries.append(InequalityEntry("Thm2b", ab, T.value, A.provenance, T.provenance, note=note))
    else:
        rep.skipped["V"] = rep.skipped["Thm2b"] = "outer-minimizing unverified (surface not convex)"
    if surface is not None and not isinstance(surface, TriMesh):
        rep.entries.append(_umbilic_entry(surface, n))
    else:
        rep.skipped["Eq4.6"] = "second fundamental form not available on meshes"


def _metric_entries(rep, q, n):
    C0, Cg, m, alpha, T = q["c0"], q["c_g"], q["mass"], q["alpha"], q["tmc_normalized"]
    half = Quantity(m.value / 2.0, m.provenance)
    rep.entries.append(InequalityEntry("I-strict", C0.value, Cg.value, C0.provenance, Cg.provenance,
                                       strict=True))
    rep.entries.append(InequalityEntry("I-upper", Cg.value, C0.value + half.value, Cg.provenance,
                                       f"{C0.provenance} + {m.provenance}"))
    rep.entries.append(InequalityEntry("III", T.value, m.value / alpha.value, T.provenance,
                                       f"{m.provenance} / {alpha.provenance}"))
    rep.entries.append(InequalityEntry("IV", C0.value, half.value, C0.provenance, m.provenance))
    rep.entries.append(InequalityEntry("Thm1a", Cg.value, m.value, Cg.provenance, m.provenance))
    vb = 2.0 * (q["volume"].value / ball_volume(n)) ** ((n - 2) / n)
    rep.entries.append(InequalityEntry("Thm1b", vb, m.value, q["volume"].provenance, m.provenance))
    rep.entries.append(SandwichEntry(
        "Eq4.10", half.value, T.value, m.value / alpha.value,
        {"lhs": m.provenance, "middle": T.provenance, "rhs": f"{m.provenance} / {alpha.provenance}"},
        note="right half is (III); the left half is only forced in the rigidity case"))


def _sample_entries(rep, f, run):
    l6 = lemma6_check(f, count=run["samples"], seed=run["seed"])
    rep.entries.append(InequalityEntry("Lemma6", 1.0, 1.0 + l6.value, "closed-form",
                                       f"min u over {l6.count} samples (seed {l6.seed})", strict=True))
    sh = superharmonicity_check(f, count=run["laplace_samples"], seed=run["seed"])
    rep.checks.append(Check("superharmonicity", sh.value, 1e-6, sh.holds,
                            f"max relative Laplacian over {sh.count} samples (seed {sh.seed})"))


def _flow_checks(rep, spec, surface, run, c0):
    fl = spec.flow or {}
    dt = float(fl.get("dt", run["flow_dt"]))
    T = float(fl.get("T", run["flow_T"]))
    nodes = int(fl.get("nodes", run["flow_nodes"]))
    if isinstance(surface, Sphere):
        trace = sphere_trace(surface.radius, 3, T)
    else:
        trace = flow_axisym(surface, dt=dt, T=T, nodes=nodes)
    audit = monotonicity_audit(trace)
    bound = capacity_bound_from_flow(trace)
    tmc = rep.quantities["tmc_normalized"]
    rep.quantities["flow_bound"] = Quantity(bound.with_tail, f"imcf(dt={dt:g}, T={T:g}, nodes={nodes}) + tail")
    rep.quantities["flow_bound_truncated"] = Quantity(bound.truncated, f"imcf(dt={dt:g}, T={T:g}, nodes={nodes})")
    rep.checks.append(Check("flow-audit", audit.area_law_error, 1e-4, audit.holds,
                            "area-law error; audit also covers the envelope and f monotonicity"))
    rep.entries.append(InequalityEntry("II-flow-lower", c0.value, bound.with_tail, c0.provenance,
                                       rep.quantities["flow_bound"].provenance))
    rep.entries.append(InequalityEntry("II-flow-upper", bound.with_tail, tmc.value,
                                       rep.quantities["flow_bound"].provenance, tmc.provenance))
    umb = float(np.nanmax(trace.arrays()["umbilic"]))
    rep.checks.append(Check("Eq4.6-flow", umb, 1e-9, umb <= 1e-9, "max H^2 - 2|A|^2 over flow samples"))


def _run_meshed(rep, spec, surface, run, base_dir):
    n = spec.n
    q = rep.quantities
    q.update(_surface_quantities(surface, n))
    robin = spec.factor["kind"] == "harmonic"
    convex = bool(getattr(surface, "is_convex", lambda: False)()) if not isinstance(surface, TriMesh) else False
    oracle, oracle_how = _oracle(spec, surface)
    if isinstance(surface, Sphere) and not robin:
        q["c0"] = Quantity(surface.radius ** (n - 2), "closed-form")
    elif isinstance(surface, TriMesh):
        fine = _bem_level(surface, 0, robin)
        tag = f"bem(panels={fine.panels})"
        q["c0"] = Quantity(fine.c0, tag)
        if robin:
            q["mass"] = Quantity(fine.mass, tag)
            q["alpha"] = Quantity(fine.alpha, tag)
    else:
        coarse = _bem_level(surface, spec.level - 1, robin)
        fine = _bem_level(surface, spec.level, robin)
        q["c0"] = _extrapolated(coarse, fine, "c0")
        q["c0_raw"] = Quantity(fine.c0, f"bem(level {fine.level}, panels={fine.panels})")
        if robin:
            q["mass"] = _extrapolated(coarse, fine, "mass")
            q["alpha"] = _extrapolated(coarse, fine, "alpha")
            q["mass_raw"] = Quantity(fine.mass, f"bem(level {fine.level}, panels={fine.panels})")
    if oracle is not None:
        q["c0_oracle"] = Quantity(oracle, oracle_how)
        rel = abs(q["c0"].value / oracle - 1.0)
        rep.checks.append(Check("c0-oracle", rel, 1e-2, rel <= 1e-2, f"relative error vs {oracle_how}"))
    _geometric_entries(rep, q, n, convex, surface)
    if robin:
        f = HarmonicMetricFactor(surface, level=fine.level, mesh=fine.mesh, ops=fine.ops)
        m, c0 = q["mass"], q["c0"]
        q["c_g"] = Quantity(c0.value + m.value / 2.0, f"{c0.provenance} (C0 + m/2, harmonic)")
        hg = robin_residual(f.density, ops=f.ops)
        H0 = panel_mean_curvature(fine.mesh)
        res = float(np.abs(hg).max() / H0.max())
        rep.checks.append(Check("robin-residual", res, ROBIN_TOL, res < ROBIN_TOL,
                                "max|H_g| / max H0 at collocation points"))
        mi = mass_identity(f)
        rel = abs(mi.rhs / f.mass - 1.0)
        rep.checks.append(Check("mass-identity", rel, MASS_IDENTITY_TOL, rel <= MASS_IDENTITY_TOL,
                                f"relative gap, surface term by {mi.method}"))
        if run["energy_check"] and not isinstance(surface, TriMesh):
            e = energy_capacity(f, fine.capacity_density, run["energy_resolution"])
            target = fine.c0 + fine.mass / 2.0
            rel = abs(e / target - 1.0)
            q["c_g_energy"] = Quantity(e, f"energy quadrature (resolution {run['energy_resolution']})")
            rep.checks.append(Check("c_g-energy", rel, ENERGY_TOL, rel <= ENERGY_TOL,
                                    "relative gap between energy quadrature and C0 + m/2"))
        _metric_entries(rep, q, n)
        _sample_entries(rep, f, run)
    else:
        rep.skipped.update({k: "no conformal factor" for k in
                            ("I-strict", "I-upper", "III", "IV", "Thm1a", "Thm1b", "Eq4.10", "Lemma6")})
    if spec.flow is not None:
        _flow_checks(rep, spec, surface, run, q["c0"])


def _run_radial(rep, spec, run):
    f = build_radial(spec)
    n = spec.n
    mq = radial_report(f.radial, tol=run["tol"])
    q = rep.quantities
    prov = mq.provenance
    q["mass"] = Quantity(mq.mass, prov["mass"])
    q["alpha"] = Quantity(mq.alpha, prov["alpha"])
    q["c_g"] = Quantity(mq.c_g, prov["c_g"])
    q["c0"] = Quantity(mq.c0, prov["c0"])
    q["tmc_normalized"] = Quantity(mq.tmc_normalized, prov["tmc_normalized"])
    q["area"] = Quantity(mq.area, prov["area"])
    q["volume"] = Quantity(mq.volume, prov["volume"])
    q["r0"] = Quantity(f.radial.r0, "bisection + Newton")
    vol, surf = radial_mass_identity(f.radial)
    gap = abs(vol + surf - mq.mass) / mq.mass
    rep.checks.append(Check("mass-identity", gap, RADIAL_IDENTITY_TOL, gap <= RADIAL_IDENTITY_TOL,
                            "radial quadrature of both sides"))
    _geometric_entries(rep, q, n, True, f.surface)
    _metric_entries(rep, q, n)
    _sample_entries(rep, f, run)


def run_case(spec: CaseSpec, run: dict, base_dir=None) -> InequalityReport:
    """Evaluate every applicable inequality for one configured case.

    Failures inside the numerical modules are caught and stored as a
    structured error record on the report.
    """
    surf_desc, fac_desc = _describe(spec)
    rep = InequalityReport(spec.name, spec.n, surf_desc, fac_desc)
    try:
        if spec.factor["kind"] in ("radial", "schwarzschild"):
            _run_radial(rep, spec, run)
        else:
            surface = build_surface(spec, base_dir)
            _run_meshed(rep, spec, surface, run, base_dir)
    except CFMassError as exc:
        rep.error = {"type": type(exc).__name__, "message": str(exc)}
    return rep


# ---------------------------------------------------------------- convergence

def _orders(errors):
    e = np.abs(np.asarray(errors, float))
    out = [None]
    for a, b in zip(e[:-1], e[1:]):
        out.append(_f(math.log2(a / b)) if a > 0 and b > 0 else None)
    return out


def convergence_study(spec: CaseSpec, levels, base_dir=None):
    """Per-level values of C0, m, C_g and the (II), (III), (IV) margins, with
    errors against an oracle when one exists (otherwise against the finest
    level) and observed orders from successive errors."""
    rows = []
    if spec.factor["kind"] in ("radial", "schwarzschild"):
        f = build_radial(spec)
        mq = radial_report(f.radial)
        for lvl in levels:
            rows.append({"level": lvl, "panels": 0, "c0": mq.c0, "mass": mq.mass, "c_g": mq.c_g,
                         "alpha": mq.alpha, "margin_II": mq.tmc_normalized - mq.c0,
                         "margin_III": mq.mass / mq.alpha - mq.tmc_normalized,
                         "margin_IV": mq.mass / 2 - mq.c0})
        exact = {"c0": mq.c0, "mass": mq.mass}
        prov = "radial quadrature (level independent)"
    else:
        surface = build_surface(spec, base_dir)
        if isinstance(surface, TriMesh):
            raise ConfigError("convergence study needs an analytic surface", ["surface.kind"])
        robin = spec.factor["kind"] == "harmonic"
        tmc = surface.total_mean_curvature() / ((spec.n - 1) * sphere_area(spec.n))
        for lvl in levels:
            b = _bem_level(surface, lvl, robin)
            row = {"level": lvl, "panels": b.panels, "c0": b.c0, "margin_II": tmc - b.c0}
            if robin:
                row.update({"mass": b.mass, "c_g": b.c0 + b.mass / 2, "alpha": b.alpha,
                            "margin_III": b.mass / b.alpha - tmc, "margin_IV": b.mass / 2 - b.c0})
            rows.append(row)
        oracle, _ = _oracle(spec, surface)
        exact = {"c0": oracle if oracle is not None else rows[-1]["c0"]}
        if robin and isinstance(surface, Sphere):
            exact["mass"] = 2.0 * surface.radius
        prov = "bem"
    for key, ref in exact.items():
        errs = [r[key] - ref for r in rows]
        for r, e, p in zip(rows, errs, _orders(errs)):
            r[f"error_{key}"] = e
            r[f"order_{key}"] = p
    return {"case": spec.name, "provenance": prov, "rows": [{k: (_f(v) if isinstance(v, float) else v)
                                                             for k, v in r.items()} for r in rows]}


__all__ = ["CSV_HEADER", "Check", "EQ_TOL", "InequalityEntry", "InequalityReport", "Quantity", "SCHEMA_VERSION",
           "SandwichEntry", "build_radial", "build_surface", "convergence_study", "run_case"]
