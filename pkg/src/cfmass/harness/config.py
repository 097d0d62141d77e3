"""Experiment configuration: TOML with a ``[run]`` table and ``[[case]]`` blocks.

Example::

    [run]
    seed = 0
    level = 4

    [[case]]
    name = "ellipsoid"
    n = 3
    surface = { kind = "ellipsoid", axes = [2.0, 1.0, 1.0] }
    factor = { kind = "harmonic" }

Validation collects every offending key before raising, so one run of
``validate`` reports all problems at once.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import tomli

from ..errors import ConfigError

SURFACE_KINDS = {
    "sphere": {"radius", "center"},
    "ellipsoid": {"axes", "center"},
    "axisym": {"coeffs"},
    "two_balls": {"radii", "distance"},
    "obj": {"path"},
    "horizon": set(),
}
FACTOR_KINDS = {
    "harmonic": set(),
    "schwarzschild": {"mass"},
    "radial": {"a", "b"},
    "none": set(),
}
RUN_DEFAULTS = {
    "seed": 0,
    "tol": 1e-12,
    "level": 4,
    "levels": [2, 3, 4],
    "samples": 100,
    "laplace_samples": 1000,
    "energy_check": True,
    "energy_resolution": 16,
    "workers": 1,
    "out": "results",
    "flow_dt": 0.01,
    "flow_T": 3.0,
    "flow_nodes": 512,
}
CASE_KEYS = {"name", "n", "surface", "factor", "level", "flow"}
FLOW_KEYS = {"dt", "T", "nodes"}


@dataclass(frozen=True)
class CaseSpec:
    name: str
    n: int
    surface: dict
    factor: dict
    level: int
    flow: dict | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    cases: tuple
    run: dict = field(default_factory=lambda: dict(RUN_DEFAULTS))
    path: str | None = None


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_surface(prefix, n, surf, bad):
    kind = surf.get("kind")
    if kind not in SURFACE_KINDS:
        bad.append(f"{prefix}.kind")
        return
    for key in set(surf) - SURFACE_KINDS[kind] - {"kind"}:
        bad.append(f"{prefix}.{key}")
    if kind == "sphere":
        r = surf.get("radius", 1.0)
        if not _number(r) or r <= 0:
            bad.append(f"{prefix}.radius")
    if kind in ("sphere", "ellipsoid") and "center" in surf:
        c = surf["center"]
        if not isinstance(c, list) or len(c) != n or not all(_number(v) for v in c):
            bad.append(f"{prefix}.center")
    if kind == "ellipsoid":
        ax = surf.get("axes")
        if not isinstance(ax, list) or len(ax) != 3 or not all(_number(v) and v > 0 for v in ax):
            bad.append(f"{prefix}.axes")
    if kind == "axisym":
        co = surf.get("coeffs")
        if not isinstance(co, list) or not co or not all(_number(v) for v in co):
            bad.append(f"{prefix}.coeffs")
    if kind == "two_balls":
        radii = surf.get("radii")
        d = surf.get("distance")
        if not isinstance(radii, list) or len(radii) != 2 or not all(_number(v) and v > 0 for v in radii):
            bad.append(f"{prefix}.radii")
        elif not _number(d) or d <= sum(radii):
            bad.append(f"{prefix}.distance")
    if kind == "obj" and not isinstance(surf.get("path"), str):
        bad.append(f"{prefix}.path")


def _check_factor(prefix, fac, bad):
    kind = fac.get("kind")
    if kind not in FACTOR_KINDS:
        bad.append(f"{prefix}.kind")
        return
    for key in set(fac) - FACTOR_KINDS[kind] - {"kind"}:
        bad.append(f"{prefix}.{key}")
    if kind == "schwarzschild":
        m = fac.get("mass", 2.0)
        if not _number(m) or m <= 0:
            bad.append(f"{prefix}.mass")
    if kind == "radial":
        a, b = fac.get("a", 1.0), fac.get("b", 0.0)
        if not _number(a) or a <= 0:
            bad.append(f"{prefix}.a")
        if not _number(b) or b > 0:
            bad.append(f"{prefix}.b")


def _check_combo(prefix, n, skind, fkind, bad):
    """Reject (surface, factor, n) combinations no module can evaluate."""
    if fkind in ("radial", "schwarzschild") and skind != "horizon":
        bad.append(f"{prefix}.surface.kind")
    if skind == "horizon" and fkind not in ("radial", "schwarzschild"):
        bad.append(f"{prefix}.factor.kind")
    if n != 3 and skind not in ("sphere", "horizon"):
        bad.append(f"{prefix}.n")
    if n != 3 and fkind == "harmonic":
        bad.append(f"{prefix}.n")


def validate(data, path=None):
    """Turn parsed TOML into an :class:`ExperimentConfig` or raise
    :class:`ConfigError` listing every offending key."""
    bad = []
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table", ["<root>"])
    for key in set(data) - {"run", "case"}:
        bad.append(key)
    run = dict(RUN_DEFAULTS)
    user_run = data.get("run", {})
    if not isinstance(user_run, dict):
        bad.append("run")
        user_run = {}
    for key, val in user_run.items():
        if key not in RUN_DEFAULTS:
            bad.append(f"run.{key}")
            continue
        ref = RUN_DEFAULTS[key]
        if isinstance(ref, bool):
            ok = isinstance(val, bool)
        elif isinstance(ref, int):
            ok = isinstance(val, int) and not isinstance(val, bool) and val >= (0 if key == "seed" else 1)
        elif isinstance(ref, float):
            ok = _number(val) and val > 0
        elif isinstance(ref, list):
            ok = isinstance(val, list) and len(val) >= 2 and all(
                isinstance(v, int) and 0 <= v <= 6 for v in val)
        else:
            ok = isinstance(val, str)
        if key == "level" and ok:
            ok = 1 <= val <= 6
        if ok:
            run[key] = val
        else:
            bad.append(f"run.{key}")
    cases = data.get("case", [])
    if not isinstance(cases, list) or not cases:
        bad.append("case")
        cases = []
    specs = []
    names = set()
    for i, c in enumerate(cases):
        prefix = f"case[{i}]"
        if not isinstance(c, dict):
            bad.append(prefix)
            continue
        for key in set(c) - CASE_KEYS:
            bad.append(f"{prefix}.{key}")
        name = c.get("name", f"case{i}")
        if not isinstance(name, str) or not name or name in names:
            bad.append(f"{prefix}.name")
        names.add(name)
        n = c.get("n", 3)
        if not isinstance(n, int) or isinstance(n, bool) or n < 3:
            bad.append(f"{prefix}.n")
            n = 3
        surf = c.get("surface")
        fac = c.get("factor", {"kind": "none"})
        if not isinstance(surf, dict):
            bad.append(f"{prefix}.surface")
            surf = {"kind": None}
        if not isinstance(fac, dict):
            bad.append(f"{prefix}.factor")
            fac = {"kind": None}
        _check_surface(f"{prefix}.surface", n, surf, bad)
        _check_factor(f"{prefix}.factor", fac, bad)
        if surf.get("kind") in SURFACE_KINDS and fac.get("kind") in FACTOR_KINDS:
            _check_combo(prefix, n, surf["kind"], fac["kind"], bad)
        level = c.get("level", run["level"])
        if not isinstance(level, int) or isinstance(level, bool) or not 1 <= level <= 6:
            bad.append(f"{prefix}.level")
        flow = c.get("flow")
        if flow is not None:
            if not isinstance(flow, dict) or set(flow) - FLOW_KEYS:
                bad.append(f"{prefix}.flow")
            elif surf.get("kind") not in ("axisym", "sphere") or n != 3:
                bad.append(f"{prefix}.flow")
        specs.append(CaseSpec(str(name), int(n), dict(surf), dict(fac), level if isinstance(level, int) else 4,
                              dict(flow) if isinstance(flow, dict) else None))
    if bad:
        keys = sorted(set(bad))
        raise ConfigError("invalid configuration keys: " + ", ".join(keys), keys)
    return ExperimentConfig(tuple(specs), run, path)


def load_config(path):
    """Read and validate a TOML configuration file.  ``CFMASS_OUT`` in the
    environment overrides the output directory."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}", ["<file>"]) from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed configuration: {exc}", ["<syntax>"]) from exc
    cfg = validate(data, str(path))
    if os.environ.get("CFMASS_OUT"):
        cfg.run["out"] = os.environ["CFMASS_OUT"]
    return cfg


__all__ = ["CaseSpec", "ExperimentConfig", "FACTOR_KINDS", "SURFACE_KINDS", "load_config", "validate"]
