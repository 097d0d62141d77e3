import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from cfmass.errors import MeanConvexityError
from cfmass.geom import Ellipsoid, Sphere, SurfaceUnion, make_icosphere, mesh_surface
from cfmass.potential import (LayerOperators, ellipsoid_capacity, evaluate, evaluate_gradient,
                              far_field_fit, richardson, robin_residual, solve_capacity,
                              solve_robin_harmonic_metric, two_sphere_capacity)
from cfmass.potential.kernels import tri_potential_field

# Capacity oracles, frozen.  Ellipsoids: sqrt(a^2 - b^2) / arccosh(a / b) for
# prolate spheroids.  Equal spheres: 2 sinh(beta) sum (-1)^(k+1) / sinh(k beta)
# with cosh(beta) = d / 2.
PROLATE_211 = 1.3151907222040506
PROLATE_311 = 1.6045563234489544
TWO_SPHERES = {3.0: 1.514408750092015, 4.0: 1.6051661816070293, 6.0: 1.7154413522723835}
# int 1/r over a unit equilateral triangle seen from its centroid
EQUILATERAL_SELF = math.sqrt(3.0) * math.log(2.0 + math.sqrt(3.0))

V0 = np.array([0.0, 0.0, 0.0])
V1 = np.array([1.0, 0.0, 0.0])
V2 = np.array([0.5, math.sqrt(3.0) / 2.0, 0.0])


def _quad_triangle(x):
    def f(t, s):
        return 1.0 / np.linalg.norm(x - (V0 + s * (V1 - V0) + t * (V2 - V0)))
    val = integrate.dblquad(f, 0.0, 1.0, 0.0, lambda s: 1.0 - s, epsabs=1e-13, epsrel=1e-13)[0]
    return val * math.sqrt(3.0) / 2.0


class TestKernel:
    def test_self_integral_at_centroid(self):
        c = (V0 + V1 + V2) / 3.0
        val, gx, gy, gz = tri_potential_field(c, V0, V1, V2, True)
        assert val == pytest.approx(EQUILATERAL_SELF, rel=1e-13)
        assert abs(gx) < 1e-12 and abs(gy) < 1e-12
        # one-sided normal field of a unit sheet
        assert gz == pytest.approx(-2.0 * math.pi, rel=1e-12)

    @pytest.mark.parametrize("x", [(0.3, 0.2, 0.7), (2.0, -1.0, 0.1), (0.5, 0.3, -0.05), (1.4, 0.0, 0.0)])
    def test_matches_adaptive_quadrature(self, x):
        x = np.array(x)
        assert tri_potential_field(x, V0, V1, V2, False)[0] == pytest.approx(_quad_triangle(x), rel=1e-10)

    def test_gradient_by_differences(self):
        x = np.array([0.4, 0.1, 0.3])
        _, *g = tri_potential_field(x, V0, V1, V2, True)
        h = 1e-5
        fd = [(tri_potential_field(x + h * e, V0, V1, V2, False)[0]
               - tri_potential_field(x - h * e, V0, V1, V2, False)[0]) / (2 * h) for e in np.eye(3)]
        assert np.allclose(g, fd, rtol=1e-7, atol=1e-9)


class TestOracles:
    def test_prolate_closed_form(self):
        assert ellipsoid_capacity(2.0, 1.0, 1.0) == pytest.approx(PROLATE_211, rel=1e-11)
        assert ellipsoid_capacity(3.0, 1.0, 1.0) == pytest.approx(PROLATE_311, rel=1e-11)

    def test_sphere(self):
        assert ellipsoid_capacity(1.5, 1.5, 1.5) == pytest.approx(1.5, rel=1e-12)

    def test_flat_disc_limit(self):
        # capacity of a disc of radius a is 2a/pi
        assert ellipsoid_capacity(1.0, 1.0, 1e-9) == pytest.approx(2.0 / math.pi, rel=1e-6)

    @pytest.mark.parametrize("d", sorted(TWO_SPHERES))
    def test_image_series(self, d):
        assert two_sphere_capacity(1.0, 1.0, d) == pytest.approx(TWO_SPHERES[d], rel=1e-12)

    def test_far_apart_spheres_add(self):
        assert two_sphere_capacity(1.0, 2.0, 1e6) == pytest.approx(3.0, rel=1e-5)

    def test_overlap(self):
        with pytest.raises(ValueError):
            two_sphere_capacity(1.0, 1.0, 1.5)


@pytest.fixture(scope="module")
def ico3():
    m = make_icosphere(3)
    return m, LayerOperators(m)


class TestOperators:
    def test_gauss_law_columns(self, ico3):
        m, ops = ico3
        a = m.face_areas
        col = a @ (ops.Kp - 0.5 * np.eye(m.n_faces))
        assert np.allclose(col, -a, rtol=1e-12, atol=1e-14)

    def test_weighted_symmetry(self, ico3):
        # S[i, j] already carries the area of panel j, so a_i S[i, j] is nearly symmetric
        def asym(mesh, S):
            B = mesh.face_areas[:, None] * S
            return np.linalg.norm(B - B.T) / np.linalg.norm(B)
        m, ops = ico3
        coarse = make_icosphere(2)
        a2, a3 = asym(coarse, LayerOperators(coarse).S), asym(m, ops.S)
        assert a3 < 1e-2
        assert a3 < a2

    def test_positive_density(self, ico3):
        m, ops = ico3
        dens, c0 = solve_capacity(m, ops=ops)
        assert np.all(dens.q > 0)
        assert c0 == pytest.approx(1.0, rel=5e-3)

    @settings(max_examples=8, deadline=None)
    @given(a=st.floats(0.5, 5.0), b=st.floats(-3.0, 0.4))
    def test_boundary_value_scaling(self, a, b):
        m, ops = make_icosphere(2), None
        ops = TestOperators._ops2 = getattr(TestOperators, "_ops2", None) or LayerOperators(m)
        _, c1 = solve_capacity(ops.mesh, ops=ops)
        _, cab = solve_capacity(ops.mesh, a, b, ops=ops)
        assert cab == pytest.approx((a - b) ** 2 * c1, rel=1e-12)


class TestCapacity:
    @pytest.mark.parametrize("R", [1.0, 2.0])
    def test_sphere_level4(self, R):
        _, c0 = solve_capacity(make_icosphere(4, radius=R))
        assert c0 == pytest.approx(R, rel=5e-3)

    def test_error_decreases(self):
        errs = [abs(solve_capacity(make_icosphere(lvl))[1] - 1.0) for lvl in (1, 2, 3, 4)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_richardson_improves_ellipsoid(self):
        e = Ellipsoid(2.0, 1.0, 1.0)
        c3 = solve_capacity(mesh_surface(e, 3))[1]
        c4 = solve_capacity(mesh_surface(e, 4))[1]
        ext = richardson(c3, c4)
        assert abs(ext - PROLATE_211) < abs(c4 - PROLATE_211)
        assert ext == pytest.approx(PROLATE_211, rel=2e-3)

    def test_translation_invariance(self):
        c_a = solve_capacity(make_icosphere(3))[1]
        c_b = solve_capacity(make_icosphere(3, center=(5.0, -2.0, 1.0)))[1]
        assert c_b == pytest.approx(c_a, rel=1e-10)

    def test_two_balls_level3(self):
        u = SurfaceUnion((Sphere(1.0, 3, (0, 0, 0)), Sphere(1.0, 3, (4, 0, 0))))
        c = solve_capacity(mesh_surface(u, 3))[1]
        assert c == pytest.approx(TWO_SPHERES[4.0], rel=1e-2)


class TestFields:
    def test_potential_outside_sphere(self, ico3):
        m, ops = ico3
        dens, c0 = solve_capacity(m, ops=ops)
        x = np.array([[2.0, 0.0, 0.0], [0.0, -3.0, 0.0], [1.0, 1.0, 1.0]])
        r = np.linalg.norm(x, axis=1)
        assert np.allclose(evaluate(dens, x), c0 / r, rtol=1e-3)
        g = evaluate_gradient(dens, x)
        assert np.allclose(g, -c0 * x / r[:, None] ** 3, rtol=5e-3, atol=1e-5)

    def test_far_field_monopole(self, ico3):
        m, ops = ico3
        dens, c0 = solve_capacity(m, ops=ops)
        fit = far_field_fit(dens, [10.0, 20.0, 40.0])
        assert fit.coefficient == pytest.approx(c0, rel=1e-6)
        assert fit.charge_value == pytest.approx(c0, rel=1e-12)

    def test_density_csv(self, ico3, tmp_path):
        m, ops = ico3
        dens, _ = solve_capacity(m, ops=ops)
        dens.to_csv(tmp_path / "q.csv")
        rows = (tmp_path / "q.csv").read_text().strip().splitlines()
        assert len(rows) >= m.n_faces


class TestRobin:
    @pytest.mark.parametrize("R", [1.0, 2.0])
    def test_sphere_mass(self, R):
        _, m = solve_robin_harmonic_metric(make_icosphere(4, radius=R))
        assert m == pytest.approx(2.0 * R, rel=1e-2)

    def test_residual_vanishes(self, ico3):
        m, ops = ico3
        dens, _ = solve_robin_harmonic_metric(m, ops=ops)
        assert np.abs(robin_residual(dens, ops=ops)).max() < 1e-8

    def test_rejects_non_mean_convex(self, ico3):
        m, _ = ico3
        with pytest.raises(MeanConvexityError):
            solve_robin_harmonic_metric(m, H0=-np.ones(m.n_faces))

    def test_float32_path_agrees(self):
        m = make_icosphere(2)
        _, c64 = solve_capacity(m)
        _, c32 = solve_capacity(m, ops=LayerOperators(m, dtype=np.float32))
        assert c32 == pytest.approx(c64, rel=1e-5)
