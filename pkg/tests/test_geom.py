import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmass.errors import (InvalidSurfaceError, MeanConvexityError, MeshTopologyError, ObjParseError,
                           OrientationError, UnsupportedSurfaceError)
from cfmass.geom import (AxisymProfile, Constants, Ellipsoid, Sphere, SurfaceUnion, TriMesh, area,
                         ball_volume, cotan_mean_curvature, enclosed_volume, load_obj, make_icosphere,
                         mean_curvature, mesh_surface, parallel_area, save_obj, sphere_area,
                         total_mean_curvature, unit_icosphere)

# Oracles computed independently with scipy (closed forms and 1-D quadrature of
# the meridian of a surface of revolution), frozen here.
PROLATE_AREA = 21.478435327883737        # 2 pi b^2 (1 + a/(b e) arcsin e)
PROLATE_TMC = 34.68753081338021          # 2 pi int (a b^2 sin t / W^2 + a sin t) dt
PROLATE_OFFSET_AREA_05 = 41.96379338816363  # area of x + 0.5 nu, meridian quadrature


class TestConstants:
    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
    def test_beta_is_omega_over_n(self, n):
        c = Constants(n)
        assert c.beta == pytest.approx(c.omega / n, rel=1e-15)

    def test_three_dimensions(self):
        assert Constants(3).omega == pytest.approx(4 * math.pi, rel=1e-15)
        assert Constants(3).beta == pytest.approx(4 * math.pi / 3, rel=1e-15)

    @pytest.mark.parametrize("n,omega", [(4, 2 * math.pi ** 2), (5, 8 * math.pi ** 2 / 3), (6, math.pi ** 3)])
    def test_known_sphere_areas(self, n, omega):
        assert sphere_area(n) == pytest.approx(omega, rel=1e-14)
        assert ball_volume(n) == pytest.approx(omega / n, rel=1e-14)

    def test_rejects_low_dimension(self):
        with pytest.raises(ValueError):
            Constants(2)


class TestSphere:
    def test_unit_sphere(self):
        s = Sphere(1.0)
        assert area(s) == pytest.approx(4 * math.pi)
        assert enclosed_volume(s) == pytest.approx(4 * math.pi / 3)
        assert total_mean_curvature(s) == pytest.approx(8 * math.pi)

    def test_four_dimensional_area(self):
        assert area(Sphere(2.0, 4)) == pytest.approx(2 * math.pi ** 2 * 8)

    @pytest.mark.parametrize("n", [3, 4, 5, 7])
    @pytest.mark.parametrize("R", [0.5, 1.0, 2.5])
    def test_closed_forms(self, n, R):
        s = Sphere(R, n)
        w = sphere_area(n)
        assert enclosed_volume(s) == pytest.approx(ball_volume(n) * R ** n, rel=1e-14)
        assert total_mean_curvature(s) / ((n - 1) * w) == pytest.approx(R ** (n - 2), rel=1e-14)

    def test_curvature_field_is_umbilic(self):
        fld = mean_curvature(Sphere(2.0))
        assert np.allclose(fld.H, 1.0)
        assert np.allclose(fld.A2, 0.5)
        assert np.abs(fld.umbilic_defect()).max() < 1e-9

    def test_parallel_area(self):
        assert parallel_area(Sphere(1.0), 1.0) == pytest.approx(16 * math.pi)
        assert parallel_area(Sphere(1.3), 0.0) == pytest.approx(area(Sphere(1.3)))

    def test_invalid(self):
        with pytest.raises(InvalidSurfaceError):
            Sphere(-1.0)
        with pytest.raises(InvalidSurfaceError):
            Sphere(1.0, 2)


class TestEllipsoid:
    e = Ellipsoid(2.0, 1.0, 1.0)

    def test_area_matches_closed_form(self):
        assert area(self.e) == pytest.approx(PROLATE_AREA, rel=1e-10)

    def test_volume_linear_map(self):
        assert enclosed_volume(self.e) == pytest.approx(8 * math.pi / 3, rel=1e-12)

    def test_total_mean_curvature(self):
        tmc = total_mean_curvature(self.e)
        assert tmc == pytest.approx(PROLATE_TMC, rel=1e-9)
        # strictly above the area bound
        assert tmc / (2 * 4 * math.pi) > math.sqrt(area(self.e) / (4 * math.pi))

    def test_unit_ellipsoid_is_sphere(self):
        fld = mean_curvature(Ellipsoid(1.0, 1.0, 1.0))
        assert np.allclose(fld.H, 2.0)

    @pytest.mark.parametrize("point,H", [((2.0, 0.0, 0.0), 4.0), ((-2.0, 0.0, 0.0), 4.0),
                                         ((0.0, 1.0, 0.0), 1.25), ((0.0, 0.0, -1.0), 1.25)])
    def test_pointwise_mean_curvature(self, point, H):
        assert self.e.mean_curvature_at(np.array([point]))[0] == pytest.approx(H, rel=1e-12)

    def test_pole_curvature_by_normal_differences(self):
        # divergence of the unit normal field of the level set, by central differences
        h = 1e-5
        x0 = np.array([2.0, 0.0, 0.0])
        ax = self.e.axes

        def normal(p):
            g = p / ax ** 2
            return g / np.linalg.norm(g)
        div = sum((normal(x0 + h * np.eye(3)[k])[k] - normal(x0 - h * np.eye(3)[k])[k]) / (2 * h)
                  for k in range(3))
        assert self.e.mean_curvature_at(x0[None])[0] == pytest.approx(div, rel=1e-6)

    def test_parallel_area_matches_offset_surface(self):
        assert parallel_area(self.e, 0.5) == pytest.approx(PROLATE_OFFSET_AREA_05, rel=1e-9)

    def test_umbilic_inequality(self):
        fld = self.e.curvature()
        assert fld.umbilic_defect().max() <= 1e-9
        assert fld.umbilic_defect().min() < -1e-2

    def test_axes_order(self):
        with pytest.raises(InvalidSurfaceError):
            Ellipsoid(1.0, 2.0, 1.0)

    def test_center_defaults(self):
        assert Ellipsoid(2.0, 1.0, 1.0, None).center == (0.0, 0.0, 0.0)


class TestAxisym:
    def test_constant_profile_is_sphere(self):
        p = AxisymProfile.from_cos_poly([1.5])
        assert area(p) == pytest.approx(4 * math.pi * 1.5 ** 2, rel=1e-10)
        assert enclosed_volume(p) == pytest.approx(4 * math.pi / 3 * 1.5 ** 3, rel=1e-10)
        assert total_mean_curvature(p) == pytest.approx(8 * math.pi * 1.5, rel=1e-10)

    def test_spline_reproduces_profile(self):
        p = AxisymProfile.from_cos_poly([1.0, 0.0, 0.3])
        th = (np.arange(512) + 0.5) * math.pi / 512
        q = AxisymProfile.from_samples(th, 1.0 + 0.3 * np.cos(th) ** 2)
        assert area(q) == pytest.approx(area(p), rel=1e-7)
        assert total_mean_curvature(q) == pytest.approx(total_mean_curvature(p), rel=1e-6)

    def test_non_mean_convex_rejected(self):
        # a deep waist makes H negative near the equator
        p = AxisymProfile.from_cos_poly([0.3, 0.0, 1.0])
        with pytest.raises(MeanConvexityError):
            mean_curvature(p)


class TestScaling:
    @settings(max_examples=10, deadline=None)
    @given(lam=st.sampled_from([0.5, 2.0, 3.0]),
           surf=st.sampled_from([Sphere(1.2), Sphere(0.7, 5), Ellipsoid(2.0, 1.5, 1.0),
                                 AxisymProfile.from_cos_poly([1.0, 0.1, 0.2])]))
    def test_analytic(self, lam, surf):
        n = surf.n
        s = surf.scaled(lam)
        assert area(s) == pytest.approx(lam ** (n - 1) * area(surf), rel=1e-10)
        assert enclosed_volume(s) == pytest.approx(lam ** n * enclosed_volume(surf), rel=1e-10)
        assert total_mean_curvature(s) == pytest.approx(lam ** (n - 2) * total_mean_curvature(surf), rel=1e-10)

    @pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
    def test_mesh(self, lam):
        m = make_icosphere(2)
        s = m.scaled(lam)
        assert s.area() == pytest.approx(lam ** 2 * m.area(), rel=1e-6)
        assert s.enclosed_volume() == pytest.approx(lam ** 3 * m.enclosed_volume(), rel=1e-6)
        assert s.total_mean_curvature() == pytest.approx(lam * m.total_mean_curvature(), rel=1e-6)


class TestMesh:
    @pytest.mark.parametrize("level,faces", [(0, 20), (1, 80), (2, 320), (3, 1280)])
    def test_icosphere_counts(self, level, faces):
        m = make_icosphere(level)
        assert m.n_faces == faces
        assert m.n_vertices == faces // 2 + 2

    def test_level_zero_is_icosahedron(self):
        assert make_icosphere(0).n_vertices == 12

    def test_level_limit(self):
        with pytest.raises(InvalidSurfaceError):
            unit_icosphere(8)

    def test_refinement_monotone(self):
        errs = {"area": [], "volume": [], "tmc": []}
        for lvl in range(2, 6):
            m = make_icosphere(lvl)
            errs["area"].append(abs(m.area() - 4 * math.pi))
            errs["volume"].append(abs(m.enclosed_volume() - 4 * math.pi / 3))
            errs["tmc"].append(abs(m.total_mean_curvature() - 8 * math.pi))
        for v in errs.values():
            assert all(b < a for a, b in zip(v, v[1:]))

    def test_obj_round_trip(self, tmp_path):
        m = make_icosphere(2, radius=1.5)
        path = tmp_path / "ico.obj"
        save_obj(m, path)
        back = load_obj(path)
        assert back.n_vertices == m.n_vertices
        assert np.allclose(back.vertices, m.vertices)
        assert back.area() == pytest.approx(m.area())

    def test_malformed_obj(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0\nf 1 2 3\n")
        with pytest.raises(ObjParseError):
            load_obj(path)

    def test_quad_faces_rejected(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(ObjParseError):
            load_obj(path)

    def test_open_mesh(self):
        m = make_icosphere(1)
        with pytest.raises(MeshTopologyError):
            TriMesh(m.vertices, m.faces[1:])

    def test_inward_orientation(self):
        m = make_icosphere(1)
        with pytest.raises(OrientationError):
            TriMesh(m.vertices, m.faces[:, ::-1])

    def test_inconsistent_orientation(self):
        m = make_icosphere(1)
        f = m.faces.copy()
        f[0] = f[0, ::-1]
        with pytest.raises(OrientationError):
            TriMesh(m.vertices, f)

    def test_zero_area_triangle(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0.0]])
        with pytest.raises(InvalidSurfaceError):
            TriMesh(v, np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]]))

    def test_cotan_curvature_on_sphere(self):
        H, w = cotan_mean_curvature(make_icosphere(4, radius=2.0))
        assert np.abs(H - 1.0).max() < 1e-2
        assert w.sum() == pytest.approx(4 * math.pi * 4, rel=1e-2)

    def test_parallel_area_rejected(self):
        with pytest.raises(UnsupportedSurfaceError):
            parallel_area(make_icosphere(2), 0.1)

    def test_contains(self):
        m = make_icosphere(3)
        inside = m.contains(np.array([[0.0, 0.0, 0.0], [0.5, 0.2, 0.1], [1.5, 0.0, 0.0]]))
        assert list(inside) == [True, True, False]


class TestUnion:
    def test_two_balls(self):
        u = SurfaceUnion((Sphere(1.0, 3, (0, 0, 0)), Sphere(1.0, 3, (4, 0, 0))))
        assert area(u) == pytest.approx(8 * math.pi)
        assert not u.is_convex()
        with pytest.raises(UnsupportedSurfaceError):
            parallel_area(u, 0.5)
        m = mesh_surface(u, 2)
        assert len(np.unique(m.components())) == 2

    def test_mixed_dimensions(self):
        with pytest.raises(InvalidSurfaceError):
            SurfaceUnion((Sphere(1.0, 3), Sphere(1.0, 4)))
