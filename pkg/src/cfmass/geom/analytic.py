"""Analytic closed hypersurfaces: round spheres (any n), ellipsoids and
axisymmetric radial graphs (n = 3).

Mean curvature is the trace of the shape operator with respect to the
outward normal, so a sphere of radius R in R^n has H = (n-1)/R.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from ..errors import InvalidSurfaceError, QuadratureError, UnsupportedSurfaceError
from .constants import ball_volume, sphere_area

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class CurvatureField:
    """Curvature sampled at quadrature nodes of a surface.

    ``weights`` are area weights (they sum to the area), so integrals of a
    nodal quantity ``f`` are ``f @ weights``.  ``A2`` and ``principal`` are
    ``None`` for meshes.
    """

    H: np.ndarray
    weights: np.ndarray
    A2: np.ndarray | None = None
    principal: np.ndarray | None = None
    nodes: np.ndarray | None = None
    normals: np.ndarray | None = None
    n: int = 3

    def umbilic_defect(self) -> np.ndarray:
        """H^2 - (n-1)|A|^2 per node; never positive, zero at umbilics."""
        if self.A2 is None:
            raise UnsupportedSurfaceError("|A|^2 is not available on this field")
        return self.H ** 2 - (self.n - 1) * self.A2

    @property
    def total(self) -> float:
        return float(self.H @ self.weights)


def _gauss_legendre(m, a, b):
    x, w = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True)
class Sphere:
    radius: float
    n: int = 3
    center: tuple = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidSurfaceError(f"sphere radius must be positive, got {self.radius}")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidSurfaceError(f"dimension must be >= 3, got {self.n}")
        c = (0.0,) * self.n if self.center is None else tuple(float(x) for x in self.center)
        if len(c) != self.n:
            raise InvalidSurfaceError("center length must equal the dimension")
        object.__setattr__(self, "center", c)

    def scaled(self, lam):
        return Sphere(self.radius * lam, self.n, tuple(lam * x for x in self.center))

    def area(self):
        return sphere_area(self.n) * self.radius ** (self.n - 1)

    def enclosed_volume(self):
        return ball_volume(self.n) * self.radius ** self.n

    def total_mean_curvature(self):
        return (self.n - 1) * sphere_area(self.n) * self.radius ** (self.n - 2)

    def parallel_area(self, t):
        return sphere_area(self.n) * (self.radius + t) ** (self.n - 1)

    def curvature(self, resolution=None):
        R, n = self.radius, self.n
        if n != 3:
            return CurvatureField(
                H=np.array([(n - 1) / R]), weights=np.array([self.area()]),
                A2=np.array([(n - 1) / R ** 2]), principal=np.full((1, n - 1), 1.0 / R), n=n)
        nodes, normals, weights = self.quadrature(resolution)
        m = len(weights)
        return CurvatureField(H=np.full(m, 2.0 / R), weights=weights, A2=np.full(m, 2.0 / R ** 2),
                              principal=np.full((m, 2), 1.0 / R), nodes=nodes, normals=normals)

    def quadrature(self, resolution=None):
        if self.n != 3:
            raise UnsupportedSurfaceError("point quadrature is only available for n = 3")
        nt = resolution or 48
        th, wt = _gauss_legendre(nt, 0.0, math.pi)
        nphi = 2 * nt
        ph = 2.0 * math.pi * np.arange(nphi) / nphi
        T, P = np.meshgrid(th, ph, indexing="ij")
        nrm = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
        w = (self.radius ** 2 * np.sin(T) * wt[:, None] * (2.0 * math.pi / nphi)).ravel()
        return np.asarray(self.center) + self.radius * nrm, nrm, w

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=1) < self.radius

    def is_convex(self):
        return True

    def project(self, x):
        d = np.atleast_2d(x) - np.asarray(self.center)
        return np.asarray(self.center) + self.radius * d / np.linalg.norm(d, axis=1)[:, None]

    def mean_curvature_at(self, x):
        return np.full(len(np.atleast_2d(x)), (self.n - 1) / self.radius)

    def to_mesh(self, level):
        from .mesh import TriMesh, unit_icosphere
        if self.n != 3:
            raise UnsupportedSurfaceError("meshes exist for n = 3 only")
        v, f = unit_icosphere(level)
        return TriMesh(np.asarray(self.center) + self.radius * v, f, source=self)

    def residual(self, x):
        return np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1) - self.radius


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid with semi-axes ``a >= b >= c`` along x, y, z."""

    a: float
    b: float
    c: float
    center: tuple = (0.0, 0.0, 0.0)
    tol: float = DEFAULT_TOL
    n: int = field(default=3, init=False)

    def __post_init__(self):
        if not (self.a >= self.b >= self.c > 0):
            raise InvalidSurfaceError(f"need a >= b >= c > 0, got {(self.a, self.b, self.c)}")
        c = (0.0, 0.0, 0.0) if self.center is None else tuple(float(x) for x in self.center)
        if len(c) != 3:
            raise InvalidSurfaceError("center must have three coordinates")
        object.__setattr__(self, "center", c)

    @property
    def axes(self):
        return np.array([self.a, self.b, self.c], dtype=float)

    def scaled(self, lam):
        return Ellipsoid(self.a * lam, self.b * lam, self.c * lam,
                         tuple(lam * x for x in self.center), self.tol)

    def _grid(self, nt):
        a, b, c = self.a, self.b, self.c
        th, wt = _gauss_legendre(nt, 0.0, math.pi)
        nphi = 2 * nt
        ph = 2.0 * math.pi * np.arange(nphi) / nphi
        T, P = np.meshgrid(th, ph, indexing="ij")
        st, ct, sp, cp = np.sin(T), np.cos(T), np.sin(P), np.cos(P)
        x = np.stack([a * ct, b * st * cp, c * st * sp], -1)
        cross = np.stack([b * c * st * ct, a * c * st * st * cp, a * b * st * st * sp], -1)
        jac = np.linalg.norm(cross, axis=-1)
        w = jac * wt[:, None] * (2.0 * math.pi / nphi)
        return x.reshape(-1, 3), w.ravel()

    def _converged(self, integrand, start=16, max_nt=1024):
        nt = start
        prev = None
        while nt <= max_nt:
            x, w = self._grid(nt)
            val = float(integrand(x) @ w)
            if prev is not None and abs(val - prev) <= max(self.tol, 1e-13 * abs(val)):
                return val, nt
            prev = val
            nt *= 2
        raise QuadratureError("ellipsoid surface quadrature did not converge")

    def _curv_at(self, x):
        inv2 = 1.0 / self.axes ** 2
        g = x * inv2
        gn = np.linalg.norm(g, axis=1)
        H = ((gn ** 2) * inv2.sum() - (g ** 2 * inv2).sum(1)) / gn ** 3
        K = 1.0 / (self.a * self.b * self.c) ** 2 / gn ** 4
        disc = np.sqrt(np.maximum(H ** 2 - 4.0 * K, 0.0))
        k = np.stack([(H + disc) / 2.0, (H - disc) / 2.0], -1)
        return H, k, g / gn[:, None]

    def area(self):
        return self._converged(lambda x: np.ones(len(x)))[0]

    def enclosed_volume(self):
        return 4.0 * math.pi / 3.0 * self.a * self.b * self.c

    def total_mean_curvature(self):
        return self._converged(lambda x: self._curv_at(x)[0])[0]

    def curvature(self, resolution=None):
        nt = resolution or self._converged(lambda x: self._curv_at(x)[0])[1]
        x, w = self._grid(nt)
        H, k, nrm = self._curv_at(x)
        return CurvatureField(H=H, weights=w, A2=(k ** 2).sum(1), principal=k,
                              nodes=x + np.asarray(self.center), normals=nrm)

    def quadrature(self, resolution=None):
        f = self.curvature(resolution)
        return f.nodes, f.normals, f.weights

    def parallel_area(self, t):
        # Steiner polynomial in R^3; integral of Gauss curvature is 4*pi.
        return self.area() + self.total_mean_curvature() * t + 4.0 * math.pi * t * t

    def contains(self, x):
        y = (np.atleast_2d(x) - np.asarray(self.center)) / self.axes
        return (y ** 2).sum(1) < 1.0

    def is_convex(self):
        return True

    def project(self, x):
        d = np.atleast_2d(x) - np.asarray(self.center)
        s = np.sqrt(((d / self.axes) ** 2).sum(1))
        return np.asarray(self.center) + d / s[:, None]

    def mean_curvature_at(self, x):
        return self._curv_at(self.project(x) - np.asarray(self.center))[0]

    def to_mesh(self, level):
        from .mesh import TriMesh, unit_icosphere
        v, f = unit_icosphere(level)
        return TriMesh(np.asarray(self.center) + v * self.axes, f, source=self)

    def residual(self, x):
        y = (np.atleast_2d(x) - np.asarray(self.center)) / self.axes
        return np.sqrt((y ** 2).sum(1)) - 1.0


@dataclass(frozen=True)
class AxisymProfile:
    """Surface of revolution about the z-axis given as a radial graph
    ``r = rho(theta)``, theta measured from +z, with exact derivatives."""

    rho: Callable
    drho: Callable
    d2rho: Callable
    tol: float = DEFAULT_TOL
    label: str = "profile"
    knots: np.ndarray | None = None
    n: int = field(default=3, init=False)

    def __post_init__(self):
        th = np.linspace(0.0, math.pi, 257)
        r = np.asarray(self.rho(th), dtype=float)
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise InvalidSurfaceError("profile radius must be positive and finite")
        ends = np.abs(np.asarray(self.drho(np.array([0.0, math.pi]))))
        if np.any(ends > 1e-8 * max(1.0, float(r.max()))):
            raise InvalidSurfaceError("profile must have rho'(0) = rho'(pi) = 0 to be smooth at the poles")

    @classmethod
    def from_cos_poly(cls, coeffs, tol=DEFAULT_TOL):
        """``rho(theta) = sum_k coeffs[k] * cos(theta)**k``."""
        c = np.asarray(coeffs, dtype=float)
        poly = np.polynomial.Polynomial(c)
        d1, d2 = poly.deriv(1), poly.deriv(2)

        def rho(t):
            return poly(np.cos(t))

        def drho(t):
            return -np.sin(t) * d1(np.cos(t))

        def d2rho(t):
            ct, st = np.cos(t), np.sin(t)
            return st * st * d2(ct) - ct * d1(ct)

        return cls(rho, drho, d2rho, tol=tol, label=f"cospoly{tuple(c.tolist())}")

    @classmethod
    def from_samples(cls, theta, rho, tol=DEFAULT_TOL):
        """Periodic even cubic spline through cell-centred samples on (0, pi)."""
        theta = np.asarray(theta, dtype=float)
        rho = np.asarray(rho, dtype=float)
        # rho(-t) = rho(t) and rho(pi + t) = rho(pi - t) make rho 2*pi-periodic and even
        th = np.concatenate([-theta[::-1], theta])
        vals = np.concatenate([rho[::-1], rho])
        th = np.append(th, th[0] + 2.0 * math.pi)
        vals = np.append(vals, vals[0])
        sp = CubicSpline(th, vals, bc_type="periodic")

        def wrap(t):
            return (np.asarray(t) - th[0]) % (2.0 * math.pi) + th[0]

        d1, d2 = sp.derivative(1), sp.derivative(2)
        knots = np.concatenate([[0.0], theta, [math.pi]])
        return cls(lambda t: sp(wrap(t)), lambda t: d1(wrap(t)), lambda t: d2(wrap(t)), tol=tol,
                   label="spline", knots=knots)

    def scaled(self, lam):
        return AxisymProfile(lambda t: lam * self.rho(t), lambda t: lam * self.drho(t),
                             lambda t: lam * self.d2rho(t), tol=self.tol, label=f"{lam}*{self.label}",
                             knots=self.knots)

    def _meridian(self, th):
        r, r1, r2 = self.rho(th), self.drho(th), self.d2rho(th)
        W = np.sqrt(r * r + r1 * r1)
        st, ct = np.sin(th), np.cos(th)
        k1 = (r * r + 2.0 * r1 * r1 - r * r2) / W ** 3
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(st > 1e-12, r1 * ct / np.where(st > 1e-12, st, 1.0), r2)
        k2 = (1.0 - ratio / r) / W
        return r, r1, W, k1, k2

    def _quad(self, f):
        if self.knots is not None:
            # piecewise-polynomial profiles: Gauss-Legendre on every knot interval
            x, w = np.polynomial.legendre.leggauss(8)
            a, b = self.knots[:-1], self.knots[1:]
            half = 0.5 * (b - a)
            pts = (a[:, None] + half[:, None] * (x[None] + 1.0)).ravel()
            return float(np.asarray(f(pts)) @ (half[:, None] * w[None]).ravel())
        val, err = integrate.quad(f, 0.0, math.pi, epsabs=self.tol, epsrel=1e-12, limit=200)
        if err > 10 * max(self.tol, 1e-12 * abs(val)):
            raise QuadratureError(f"axisymmetric quadrature error estimate {err:.2e} too large")
        return val

    def area(self):
        def f(t):
            r, _, W, _, _ = self._meridian(t)
            return 2.0 * math.pi * r * np.sin(t) * W
        return self._quad(f)

    def enclosed_volume(self):
        return self._quad(lambda t: 2.0 * math.pi / 3.0 * self.rho(t) ** 3 * np.sin(t))

    def total_mean_curvature(self):
        def f(t):
            r, _, W, k1, k2 = self._meridian(t)
            return 2.0 * math.pi * (k1 + k2) * r * np.sin(t) * W
        return self._quad(f)

    def curvature(self, resolution=None):
        nt = resolution or 256
        nphi = 16
        th, wt = _gauss_legendre(nt, 0.0, math.pi)
        r, r1, W, k1, k2 = self._meridian(th)
        st = np.sin(th)
        ph = 2.0 * math.pi * np.arange(nphi) / nphi
        T = np.repeat(th, nphi)
        P = np.tile(ph, nt)
        R = np.repeat(r, nphi)
        dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
        nodes = R[:, None] * dirs
        # outward normal: (rho * e_r - rho' * e_theta) / W
        e_th = np.stack([np.cos(T) * np.cos(P), np.cos(T) * np.sin(P), -np.sin(T)], -1)
        normals = (R[:, None] * dirs - np.repeat(r1, nphi)[:, None] * e_th) / np.repeat(W, nphi)[:, None]
        w = np.repeat(r * st * W * wt, nphi) * (2.0 * math.pi / nphi)
        H = np.repeat(k1 + k2, nphi)
        k = np.stack([np.repeat(k1, nphi), np.repeat(k2, nphi)], -1)
        return CurvatureField(H=H, weights=w, A2=(k ** 2).sum(1), principal=k, nodes=nodes, normals=normals)

    def quadrature(self, resolution=None):
        f = self.curvature(resolution)
        return f.nodes, f.normals, f.weights

    def parallel_area(self, t):
        return self.area() + self.total_mean_curvature() * t + 4.0 * math.pi * t * t

    def is_convex(self, resolution=512):
        th = np.linspace(0.0, math.pi, resolution + 1)
        _, _, _, k1, k2 = self._meridian(th)
        return bool(np.all(k1 > 0) and np.all(k2 > 0))

    def project(self, x):
        x = np.atleast_2d(x)
        r = np.linalg.norm(x, axis=1)
        return x * (self.rho(self.polar_angle(x)) / r)[:, None]

    def mean_curvature_at(self, x):
        _, _, _, k1, k2 = self._meridian(self.polar_angle(x))
        return k1 + k2

    def to_mesh(self, level):
        from .mesh import TriMesh, unit_icosphere
        v, f = unit_icosphere(level)
        th = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
        return TriMesh(v * self.rho(th)[:, None], f, source=self)

    def polar_angle(self, x):
        x = np.atleast_2d(x)
        return np.arccos(np.clip(x[:, 2] / np.linalg.norm(x, axis=1), -1.0, 1.0))

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x, axis=1) < self.rho(self.polar_angle(x))

    def residual(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x, axis=1) - self.rho(self.polar_angle(x))


@dataclass(frozen=True)
class SurfaceUnion:
    """Disjoint union of closed surfaces; every quantity is additive."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if len(parts) < 1:
            raise InvalidSurfaceError("a union needs at least one component")
        if len({p.n for p in parts}) != 1:
            raise InvalidSurfaceError("all components must share the dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def n(self):
        return self.parts[0].n

    def scaled(self, lam):
        return SurfaceUnion(tuple(p.scaled(lam) for p in self.parts))

    def area(self):
        return sum(p.area() for p in self.parts)

    def enclosed_volume(self):
        return sum(p.enclosed_volume() for p in self.parts)

    def total_mean_curvature(self):
        return sum(p.total_mean_curvature() for p in self.parts)

    def is_convex(self):
        # a union of several bodies is never convex
        return len(self.parts) == 1 and self.parts[0].is_convex()

    def parallel_area(self, t):
        if len(self.parts) != 1:
            raise UnsupportedSurfaceError("parallel_area needs a single convex component")
        return self.parts[0].parallel_area(t)

    def curvature(self, resolution=None):
        fields = [p.curvature(resolution) for p in self.parts]

        def cat(name):
            vals = [getattr(f, name) for f in fields]
            return None if any(v is None for v in vals) else np.concatenate(vals)
        return CurvatureField(H=cat("H"), weights=cat("weights"), A2=cat("A2"), principal=cat("principal"),
                              nodes=cat("nodes"), normals=cat("normals"), n=self.n)

    def quadrature(self, resolution=None):
        f = self.curvature(resolution)
        return f.nodes, f.normals, f.weights

    def contains(self, x):
        return np.any([p.contains(x) for p in self.parts], axis=0)

    def to_mesh(self, level):
        from .mesh import merge_meshes
        return merge_meshes([p.to_mesh(level) for p in self.parts])
