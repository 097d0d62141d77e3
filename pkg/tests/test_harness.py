import json
import math

import pytest

from cfmass.errors import ConfigError, SolverError
from cfmass.harness import (EQ_TOL, CaseSpec, InequalityEntry, InequalityReport, SandwichEntry,
                            convergence_study, load_config, run_case, validate)
from cfmass.harness import cli, report
from cfmass.harness.config import RUN_DEFAULTS

FAST_RUN = dict(RUN_DEFAULTS, samples=50, laplace_samples=10, energy_resolution=8)


def _spec(name, surface, factor=None, n=3, level=2, flow=None):
    return CaseSpec(name, n, surface, factor or {"kind": "none"}, level, flow)


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL = """
[run]
seed = 3
level = 3
samples = 30
laplace_samples = 5
energy_check = false

[[case]]
name = "sphere"
surface = { kind = "sphere", radius = 1.0 }
factor = { kind = "harmonic" }

[[case]]
name = "schw"
n = 5
surface = { kind = "horizon" }
factor = { kind = "schwarzschild", mass = 1.0 }
"""


class TestConfig:
    def test_defaults(self):
        cfg = validate({"case": [{"surface": {"kind": "sphere"}}]})
        assert cfg.cases[0].n == 3
        assert cfg.cases[0].factor == {"kind": "none"}
        assert cfg.run == RUN_DEFAULTS

    def test_load(self, tmp_path):
        cfg = load_config(_write(tmp_path, SMALL))
        assert [c.name for c in cfg.cases] == ["sphere", "schw"]
        assert cfg.run["seed"] == 3 and cfg.run["energy_check"] is False

    def test_out_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CFMASS_OUT", str(tmp_path / "elsewhere"))
        assert load_config(_write(tmp_path, SMALL)).run["out"] == str(tmp_path / "elsewhere")

    @pytest.mark.parametrize("case,key", [
        ({"surface": {"kind": "cube"}}, "case[0].surface.kind"),
        ({"surface": {"kind": "sphere", "radius": -1.0}}, "case[0].surface.radius"),
        ({"surface": {"kind": "sphere"}, "colour": "red"}, "case[0].colour"),
        ({"surface": {"kind": "ellipsoid", "axes": [1.0, 2.0]}}, "case[0].surface.axes"),
        ({"surface": {"kind": "two_balls", "radii": [1.0, 1.0], "distance": 1.5}}, "case[0].surface.distance"),
        ({"surface": {"kind": "sphere"}, "factor": {"kind": "radial"}}, "case[0].surface.kind"),
        ({"surface": {"kind": "horizon"}, "factor": {"kind": "harmonic"}}, "case[0].factor.kind"),
        ({"surface": {"kind": "horizon"}, "factor": {"kind": "radial", "b": 0.1}}, "case[0].factor.b"),
        ({"n": 5, "surface": {"kind": "ellipsoid", "axes": [2.0, 1.0, 1.0]}}, "case[0].n"),
        ({"n": 4, "surface": {"kind": "sphere"}, "factor": {"kind": "harmonic"}}, "case[0].n"),
        ({"surface": {"kind": "ellipsoid", "axes": [2.0, 1.0, 1.0]}, "flow": {}}, "case[0].flow"),
        ({"surface": {"kind": "sphere"}, "level": 9}, "case[0].level"),
    ])
    def test_rejected(self, case, key):
        with pytest.raises(ConfigError) as info:
            validate({"case": [case]})
        assert key in info.value.keys

    def test_all_keys_reported(self):
        with pytest.raises(ConfigError) as info:
            validate({"run": {"seed": -1, "speed": 3}, "case": [{"surface": {"kind": "cube"}}], "extra": 1})
        assert {"run.seed", "run.speed", "case[0].surface.kind", "extra"} <= set(info.value.keys)

    def test_duplicate_names(self):
        with pytest.raises(ConfigError) as info:
            validate({"case": [{"name": "a", "surface": {"kind": "sphere"}},
                               {"name": "a", "surface": {"kind": "sphere"}}]})
        assert "case[1].name" in info.value.keys

    def test_no_cases(self):
        with pytest.raises(ConfigError):
            validate({"run": {}})

    def test_malformed_toml(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config(_write(tmp_path, "[[case]\nname = 1"))
        assert info.value.keys == ["<syntax>"]


class TestEntries:
    @pytest.mark.parametrize("lhs,rhs,eq,holds", [
        (1.0, 1.0, True, True),
        (1.0, 1.0005, True, True),
        (1.0, 0.9995, True, True),
        (1.0, 1.1, False, True),
        (1.0, 0.99, False, False),
    ])
    def test_flags(self, lhs, rhs, eq, holds):
        e = InequalityEntry("x", lhs, rhs, "a", "b")
        assert e.equality is eq and e.holds is holds
        assert e.margin == pytest.approx(rhs - lhs)
        assert e.relative == pytest.approx((rhs - lhs) / max(lhs, rhs))

    def test_strict(self):
        assert not InequalityEntry("x", 1.0, 1.0, "a", "b", strict=True).holds
        assert InequalityEntry("x", 1.0, 1.0 + 1e-9, "a", "b", strict=True).holds

    def test_threshold(self):
        assert EQ_TOL == 1e-3

    def test_sandwich_left_half_is_informational(self):
        s = SandwichEntry("Eq4.10", 1.5, 1.4, 2.0, {"lhs": "a", "middle": "b", "rhs": "c"})
        assert s.holds and not s.left_holds and not s.equality
        d = s.to_dict()
        assert d["left_implied"] is False

    def test_report_status(self):
        rep = InequalityReport("c", 3, {}, {})
        rep.entries.append(InequalityEntry("ok", 1.0, 2.0, "a", "b"))
        assert rep.status == "ok"
        rep.entries.append(InequalityEntry("bad", 2.0, 1.0, "a", "b"))
        assert rep.status == "violation" and rep.violations == ["bad"]
        rep.error = {"type": "SolverError", "message": "x"}
        assert rep.status == "error"

    def test_every_side_has_provenance(self):
        rep = run_case(_spec("s", {"kind": "sphere"}, {"kind": "harmonic"}, level=2), FAST_RUN)
        for e in rep.to_dict()["inequalities"]:
            for side, prov in e["provenance"].items():
                assert prov, (e["id"], side)
        for q in rep.to_dict()["quantities"].values():
            assert q["provenance"]


class TestRunCase:
    def test_sphere_equalities(self):
        rep = run_case(_spec("s", {"kind": "sphere"}, {"kind": "harmonic"}, level=3), FAST_RUN)
        assert rep.status == "ok", rep.violations
        for id in ("I-upper", "II", "III", "IV", "V", "Thm1a", "Thm1b", "Thm2a", "Thm2b"):
            assert rep.entry(id).equality, id
        assert not rep.entry("I-strict").equality

    def test_radial_case(self):
        rep = run_case(_spec("r", {"kind": "horizon"}, {"kind": "radial", "a": 1.0, "b": -0.05}, n=5), FAST_RUN)
        assert rep.status == "ok"
        assert rep.entry("I-upper").relative > EQ_TOL
        assert rep.entry("I-strict").holds
        assert rep.check("mass-identity").value < 1e-6

    def test_surface_only_two_balls(self):
        rep = run_case(_spec("tb", {"kind": "two_balls", "radii": [1.0, 1.0], "distance": 4.0}, level=3),
                       FAST_RUN)
        assert rep.status == "ok"
        assert rep.entry("Thm2a").holds
        assert rep.skipped["Thm2b"].startswith("outer-minimizing unverified")
        assert rep.quantities["c0_oracle"].provenance == "image-charge series"

    def test_solver_error_recorded(self, monkeypatch):
        def boom(*a, **k):
            raise SolverError("singular")
        monkeypatch.setattr(report, "_bem_level", boom)
        rep = run_case(_spec("s", {"kind": "ellipsoid", "axes": [2.0, 1.0, 1.0]}), FAST_RUN)
        assert rep.status == "error"
        assert rep.error == {"type": "SolverError", "message": "singular"}

    def test_obj_surface(self, tmp_path):
        # meshes are taken as given (no refinement), so use a shape with real margins
        from cfmass.geom import Ellipsoid, mesh_surface, save_obj
        save_obj(mesh_surface(Ellipsoid(2.0, 1.0, 1.0), 3), tmp_path / "egg.obj")
        spec = _spec("obj", {"kind": "obj", "path": "egg.obj"})
        rep = run_case(spec, FAST_RUN, base_dir=str(tmp_path))
        assert rep.status == "ok", rep.violations
        assert rep.quantities["c0"].value == pytest.approx(1.3151907222040506, rel=1e-2)
        assert rep.quantities["c0"].provenance == "bem(panels=1280)"
        assert "Eq4.6" in rep.skipped


class TestConvergence:
    def test_sphere_errors_decrease(self):
        t = convergence_study(_spec("s", {"kind": "sphere"}), [1, 2, 3, 4])
        errs = [abs(r["error_c0"]) for r in t["rows"]]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert t["rows"][-1]["order_c0"] > 1.5

    def test_radial_level_independent(self):
        t = convergence_study(_spec("r", {"kind": "horizon"}, {"kind": "schwarzschild", "mass": 2.0}), [2, 3, 4])
        assert len({r["c_g"] for r in t["rows"]}) == 1
        assert all(abs(r["error_mass"]) < 1e-10 for r in t["rows"])


class TestCli:
    def test_check_writes_reports(self, tmp_path, capsys):
        cfg = _write(tmp_path, SMALL)
        out = tmp_path / "out"
        assert cli.main(["check", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
        doc = json.loads((out / "report.json").read_text())
        assert doc["schema_version"] == 1
        assert doc["summary"] == {"sphere": "ok", "schw": "ok"}
        assert (out / "sphere.csv").read_text().startswith("case,inequality,lhs,rhs")
        assert (out / "schw.csv").exists()
        assert "schw: ok; equality:" in capsys.readouterr().out

    def test_check_csv_only(self, tmp_path):
        cfg = _write(tmp_path, SMALL)
        out = tmp_path / "out"
        assert cli.main(["check", "--config", str(cfg), "--out", str(out), "--format", "csv"]) == 0
        assert not (out / "report.json").exists()
        assert (out / "sphere.csv").exists()

    def test_bad_config_exit_1(self, tmp_path, capsys):
        cfg = _write(tmp_path, '[[case]]\nsurface = { kind = "cube" }\n')
        assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert "case[0].surface.kind" in capsys.readouterr().err

    def test_unknown_subcommand_exit_1(self):
        assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG

    def test_solver_failure_exit_2(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise SolverError("did not converge")
        monkeypatch.setattr(report, "_bem_level", boom)
        cfg = _write(tmp_path, SMALL)
        assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER
        doc = json.loads((tmp_path / "o" / "report.json").read_text())
        assert doc["summary"] == {"sphere": "error", "schw": "ok"}

    def test_violation_exit_3(self, tmp_path, monkeypatch):
        real = report.run_case

        def tampered(spec, run, base=None):
            rep = real(spec, run, base)
            rep.entries.append(InequalityEntry("Thm1a", 2.0, 1.0, "injected", "injected"))
            return rep
        monkeypatch.setattr(cli, "run_case", tampered)
        cfg = _write(tmp_path, SMALL)
        assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_VIOLATION

    def test_violation_beats_solver_failure(self, tmp_path, monkeypatch):
        def fake(spec, run, base=None):
            rep = InequalityReport(spec.name, spec.n, {}, {})
            if spec.name == "sphere":
                rep.error = {"type": "SolverError", "message": "x"}
            else:
                rep.entries.append(InequalityEntry("IV", 2.0, 1.0, "a", "b"))
            return rep
        monkeypatch.setattr(cli, "run_case", fake)
        cfg = _write(tmp_path, SMALL)
        assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_VIOLATION

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_schwarzschild(self, n, tmp_path, capsys):
        assert cli.main(["schwarzschild", "--n", str(n), "--tol", "1e-8", "--out", str(tmp_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        row = doc["results"][0]
        assert row["c_g"] == pytest.approx(2.0, abs=1e-8)
        assert row["alpha"] == 2.0
        assert all(row["flags"].values())

    def test_radial(self, tmp_path, capsys):
        assert cli.main(["radial", "--n", "5", "--b", "-0.1", "--out", str(tmp_path)]) == 0
        row = json.loads(capsys.readouterr().out)["results"][0]
        assert row["c_g"] < row["mass"]
        assert not row["flags"]["Thm1a"]

    def test_radial_construction_failure_exit_2(self, tmp_path):
        assert cli.main(["radial", "--n", "3", "--b", "-0.5", "--out", str(tmp_path)]) == cli.EXIT_SOLVER

    def test_capacity(self, tmp_path, capsys):
        cfg = _write(tmp_path, '[run]\nlevel = 3\n[[case]]\nname = "e"\n'
                               'surface = { kind = "ellipsoid", axes = [2.0, 1.0, 1.0] }\n')
        assert cli.main(["capacity", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        row = json.loads(capsys.readouterr().out)["results"][0]
        assert abs(row["relative_error"]) < 1e-2

    def test_imcf(self, tmp_path, capsys):
        cfg = _write(tmp_path, '[[case]]\nname = "p"\nsurface = { kind = "axisym", coeffs = [1.0, 0.0, 0.3] }\n'
                               'flow = { dt = 0.05, T = 1.0, nodes = 64 }\n')
        assert cli.main(["imcf", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        row = json.loads(capsys.readouterr().out)["results"][0]
        assert row["audit_holds"]
        assert (tmp_path / "p_trace.csv").exists()

    def test_harmonic_metric(self, tmp_path, capsys):
        cfg = _write(tmp_path, '[run]\nlevel = 3\n[[case]]\nname = "s"\nsurface = { kind = "sphere" }\n'
                               'factor = { kind = "harmonic" }\n')
        assert cli.main(["harmonic-metric", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        row = json.loads(capsys.readouterr().out)["results"][0]
        assert row["mass"] == pytest.approx(2.0, rel=5e-2)
        assert (tmp_path / "s_density.csv").exists()

    def test_convergence(self, tmp_path):
        cfg = _write(tmp_path, '[run]\nlevels = [1, 2, 3]\n[[case]]\nname = "s"\nsurface = { kind = "sphere" }\n')
        assert cli.main(["convergence", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "convergence.json").read_text())
        assert [r["level"] for r in doc["tables"][0]["rows"]] == [1, 2, 3]

    def test_json_has_no_nan(self, tmp_path):
        cfg = _write(tmp_path, SMALL)
        cli.main(["check", "--config", str(cfg), "--out", str(tmp_path)])
        text = (tmp_path / "report.json").read_text()
        assert "NaN" not in text and "Infinity" not in text
        json.loads(text)
        assert math.isfinite(json.loads(text)["cases"][1]["quantities"]["mass"]["value"])
