"""Conformal factors ``u`` with ``g = u^(4/(n-2)) delta`` on the exterior of a
closed surface, and the quantities built from them: mass, conformal mean
curvature and capacity, ``alpha = min u`` and the boundary mass identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedSurfaceError
from .geom import Sphere, SurfaceUnion, TriMesh, cotan_mean_curvature, mesh_surface
from .geom.constants import sphere_area
from .potential import (LayerOperators, evaluate, robin_residual, solve_capacity,
                        solve_robin_harmonic_metric)
from .potential.bem import FOUR_PI
from .radial import RadialFactor, radial_adm_mass, radial_g_capacity, radial_mass_identity

# relative tolerance for "H_g vanishes" guards
MINIMAL_TOL = 1e-2


def _as_points(x, n):
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[1] != n:
        raise DomainError(f"points must have {n} coordinates")
    return x


class RadialConformalFactor:
    """``u(|x - c|)`` from a :class:`RadialFactor`, defined outside ``S_r0``."""

    kind = "radial"
    harmonic = False

    def __init__(self, radial: RadialFactor, center=None):
        self.radial = radial
        self.n = radial.n
        self.center = np.zeros(self.n) if center is None else np.asarray(center, float)
        self.surface = Sphere(radial.r0, self.n, tuple(self.center))

    def _r(self, x):
        return np.linalg.norm(_as_points(x, self.n) - self.center, axis=1)

    def value(self, x, check=True):
        r = self._r(x)
        if check and np.any(r < self.radial.r0 * (1 - 1e-12)):
            raise DomainError("point inside the boundary sphere")
        return self.radial.u(r)

    def gradient(self, x, check=True):
        d = _as_points(x, self.n) - self.center
        r = np.linalg.norm(d, axis=1)
        if check and np.any(r < self.radial.r0 * (1 - 1e-12)):
            raise DomainError("point inside the boundary sphere")
        return (self.radial.du(r) / r)[:, None] * d

    def laplacian(self, x):
        return self.radial.laplacian(self._r(x))

    @property
    def scale(self):
        return self.radial.r0


class SchwarzschildFactor(RadialConformalFactor):
    """``u = 1 + (m/2) r^(2-n)`` outside the horizon ``r = (m/2)^(1/(n-2))``."""

    kind = "schwarzschild"
    harmonic = True

    def __init__(self, m, n=3, center=None):
        self.m = float(m)
        super().__init__(RadialFactor.schwarzschild(n, m), center)

    def laplacian(self, x):
        return np.zeros(len(np.atleast_2d(x)))


class UnitFactor:
    """``u = 1``: the Euclidean metric outside ``surface``."""

    kind = "unit"
    harmonic = True

    def __init__(self, surface):
        self.surface = surface
        self.n = surface.n

    def value(self, x, check=True):
        return np.ones(len(np.atleast_2d(x)))

    def gradient(self, x, check=True):
        return np.zeros((len(np.atleast_2d(x)), self.n))

    def laplacian(self, x):
        return np.zeros(len(np.atleast_2d(x)))

    @property
    def scale(self):
        return _extent(self.surface)


class HarmonicMetricFactor:
    """Harmonic-metric factor ``u = 1 + Sq`` of a surface in R^3 (BEM)."""

    kind = "harmonic"
    harmonic = True
    n = 3

    def __init__(self, surface, level=4, mesh=None, ops=None):
        self.surface = surface
        self.mesh = mesh if mesh is not None else mesh_surface(surface, level)
        self.level = level
        self.ops = ops or LayerOperators(self.mesh)
        self.density, self.mass = solve_robin_harmonic_metric(self.mesh, ops=self.ops)

    def value(self, x, check=True):
        return self.density.value(x, check)

    def gradient(self, x, check=True):
        return self.density.gradient(x, check)

    def laplacian(self, x):
        return self.laplacian_with_scale(x)[0]

    def laplacian_with_scale(self, x):
        """Finite-difference Laplacian of the closed-form layer potential and
        the sum of the absolute second differences it cancels.

        Steps are a small fraction of the distance to the nearest panel and two step
        sizes are combined to remove the leading truncation term.
        """
        x = _as_points(x, 3)
        cent = self.mesh.centroids
        dist = np.array([np.linalg.norm(cent - p, axis=1).min() for p in x])
        lap = []
        u0 = evaluate(self.density, x, check=False, exact=True)
        for h in (0.02 * dist, 0.01 * dist):
            total = np.zeros(len(x))
            absum = np.zeros(len(x))
            for k in range(3):
                e = np.zeros((len(x), 3))
                e[:, k] = h
                d2 = (evaluate(self.density, x + e, check=False, exact=True)
                      + evaluate(self.density, x - e, check=False, exact=True) - 2.0 * u0) / h ** 2
                total += d2
                absum += np.abs(d2)
            lap.append((total, absum))
        return (4.0 * lap[1][0] - lap[0][0]) / 3.0, lap[1][1]

    def collocation_values(self):
        return 1.0 + self.ops.S @ self.density.q

    @property
    def scale(self):
        return _extent(self.mesh)


def _extent(surface):
    if isinstance(surface, TriMesh):
        v = surface.vertices
        return float(np.linalg.norm(v - v.mean(0), axis=1).max())
    if isinstance(surface, Sphere):
        return surface.radius
    if isinstance(surface, SurfaceUnion):
        return max(_extent(p) for p in surface.parts) + float(
            np.ptp([np.asarray(getattr(p, "center", (0.0,) * p.n)) for p in surface.parts], axis=0).max())
    nodes = surface.quadrature(32)[0]
    return float(np.linalg.norm(nodes, axis=1).max())


def adm_mass(f):
    if f.kind == "schwarzschild":
        return f.m
    if f.kind == "harmonic":
        return f.mass
    if f.kind == "radial":
        return radial_adm_mass(f.radial)
    if f.kind == "unit":
        return 0.0
    raise UnsupportedSurfaceError(f"unknown factor kind {f.kind}")


def _check_pairing(f, s):
    if s is None or s is f.surface or (f.kind == "harmonic" and s is f.mesh):
        return f.surface if s is None else s
    if isinstance(s, Sphere) and isinstance(f.surface, Sphere) and s == f.surface:
        return s
    if f.kind == "unit":
        return s
    raise DomainError("surface does not match the one defining the conformal factor")


def _surface_nodes(s):
    """Nodes, outward normals, weights and exact H of an analytic surface."""
    if isinstance(s, Sphere) and s.n != 3:
        e = np.zeros(s.n)
        e[0] = 1.0
        return (np.asarray(s.center) + s.radius * e)[None], e[None], np.array([s.area()]), \
            np.array([(s.n - 1) / s.radius])
    fld = s.curvature()
    return fld.nodes, fld.normals, fld.weights, fld.H


def mean_curvature_g(f, s=None):
    """Conformal mean curvature ``u^(-2/(n-2)) (H0 + 2(n-1)/(n-2) u_nu / u)``
    at the nodes of ``s``.  For the harmonic-metric factor this is the
    residual of the discrete boundary condition at the collocation points."""
    s = _check_pairing(f, s)
    if f.kind == "harmonic":
        return robin_residual(f.density, ops=f.ops)
    n = f.n
    x, nu, _, H0 = _surface_nodes(s)
    u = f.value(x, check=False)
    un = np.einsum("ij,ij->i", f.gradient(x, check=False), nu)
    return u ** (-2.0 / (n - 2)) * (H0 + 2.0 * (n - 1) / (n - 2) * un / u)


def alpha_min(f, s=None):
    """``min u`` over the boundary."""
    s = _check_pairing(f, s)
    if f.kind == "harmonic":
        return float(f.collocation_values().min())
    if f.kind == "unit":
        return 1.0
    return float(f.radial.u(f.radial.r0))


@dataclass(frozen=True)
class GCapacity:
    value: float
    exact: bool
    method: str
    c0: float | None = None
    mass: float | None = None
    cross_check: float | None = None


def euclidean_capacity(s, level=4, ops=None):
    """``C0`` of a surface: closed form on spheres, BEM otherwise."""
    if isinstance(s, Sphere):
        return s.radius ** (s.n - 2), "closed-form"
    mesh = mesh_surface(s, level)
    _, c0 = solve_capacity(mesh, ops=ops)
    return c0, f"bem(panels={mesh.n_faces})"


def g_capacity(f, s=None, cross_check=False, energy_resolution=16):
    """Capacity of the boundary in the conformal metric.

    Harmonic factors give the exact value ``C0 + m/2``; radial factors use
    the one-dimensional minimizer.  ``cross_check`` adds an independent
    Dirichlet-energy quadrature for the harmonic-metric factor.
    """
    s = _check_pairing(f, s)
    if f.kind == "unit":
        c0, how = euclidean_capacity(s)
        return GCapacity(c0, True, how, c0, 0.0)
    if f.kind in ("radial", "schwarzschild"):
        cap = radial_g_capacity(f.radial).value
        m = adm_mass(f)
        return GCapacity(cap, True, "radial-quadrature", f.radial.r0 ** (f.n - 2), m)
    if f.kind == "harmonic":
        vdens, c0 = solve_capacity(f.mesh, ops=f.ops)
        value = c0 + f.mass / 2.0
        check = None
        if cross_check:
            check = energy_capacity(f, vdens, energy_resolution)
        return GCapacity(value, True, f"bem(panels={f.mesh.n_faces})", c0, f.mass, check)
    raise UnsupportedSurfaceError(f"no capacity evaluator for factor kind {f.kind}")


def _ray_cast(mesh, origin, dirs, faces_mask):
    """Largest hit parameter ``t`` of rays ``origin + t d`` with the mesh."""
    tri = mesh.triangles[faces_mask]
    v0 = tri[:, 0] - origin
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    out = np.full(len(dirs), np.nan)
    for start in range(0, len(dirs), 256):
        d = dirs[start:start + 256]
        p = np.cross(d[:, None, :], e2[None])
        det = np.einsum("kj,ikj->ik", e1, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = -v0[None]
            uu = np.einsum("ikj,ikj->ik", tvec, p) * inv
            q = np.cross(tvec, e1[None])
            vv = np.einsum("ij,ikj->ik", d, q) * inv
            t = np.einsum("kj,ikj->ik", e2, q) * inv
        ok = (uu >= -1e-12) & (vv >= -1e-12) & (uu + vv <= 1 + 1e-12) & (t > 0) & np.isfinite(t)
        out[start:start + 256] = np.where(ok, t, -np.inf).max(axis=1)
    if np.any(~np.isfinite(out)):
        raise DomainError("ray from component centre misses the mesh (not star-shaped)")
    return out


def energy_capacity(f, vdens, resolution=16, radial_nodes=24):
    """``(1/(4 pi)) int u^2 |grad(v/u)|^2`` over the exterior, where ``v`` is
    the Euclidean capacity potential of ``vdens``.

    Each component contributes over its Voronoi cell, integrated along rays
    from its vertex centroid with ``r = r_b / tau``, ``tau in (0, 1]``, which
    maps the infinite ray onto a finite interval with an integrand that stays
    bounded at infinity.
    """
    mesh = f.mesh
    comp = mesh.components()
    labels = np.unique(comp)
    centres = np.array([mesh.vertices[np.unique(mesh.faces[comp == c])].mean(0) for c in labels])
    ct, wt = np.polynomial.legendre.leggauss(resolution)
    nphi = 2 * resolution
    ph = 2.0 * math.pi * (np.arange(nphi) + 0.5) / nphi
    st = np.sqrt(1.0 - ct ** 2)
    dirs = np.stack([np.repeat(st, nphi) * np.tile(np.cos(ph), resolution),
                     np.repeat(st, nphi) * np.tile(np.sin(ph), resolution),
                     np.repeat(ct, nphi)], 1)
    wdir = np.repeat(wt, nphi) * (2.0 * math.pi / nphi)
    tau, wtau = np.polynomial.legendre.leggauss(radial_nodes)
    tau = 0.5 * (tau + 1.0)
    wtau = 0.5 * wtau
    total = 0.0
    for k, c in enumerate(labels):
        rb = _ray_cast(mesh, centres[k], dirs, comp == c)
        r = rb[:, None] / tau[None, :]
        pts = centres[k] + dirs[:, None, :] * r[..., None]
        pts = pts.reshape(-1, 3)
        w = (wdir[:, None] * rb[:, None] ** 3 / tau[None, :] ** 4 * wtau[None, :]).ravel()
        if len(labels) > 1:
            dist = np.linalg.norm(pts[:, None, :] - centres[None], axis=2)
            w = w * (np.argmin(dist, axis=1) == k)
        u, gu = f.density.value_and_gradient(pts, check=False)
        v, gv = vdens.value_and_gradient(pts, check=False)
        integrand = np.sum((gv - (v / u)[:, None] * gu) ** 2, axis=1)
        total += float(integrand @ w)
    return total / FOUR_PI


@dataclass(frozen=True)
class MassIdentity:
    mass: float
    rhs: float
    volume_term: float
    surface_term: float
    method: str


def mass_identity(f, s=None, resolution=None):
    """Both sides of ``m = -(2/((n-2) w)) int Lap u + (1/((n-1) w)) int H0 u``.

    Refuses factors whose boundary is not minimal in the conformal metric.
    The harmonic-metric surface term is an independent quadrature on the
    analytic surface (or on mesh vertices) rather than the collocation sum.
    """
    s = _check_pairing(f, s)
    hg = mean_curvature_g(f, s)
    if f.kind == "harmonic":
        src = f.mesh.source
        if src is not None:
            parts = src if isinstance(src, (list, tuple)) else [src]
            surf = parts[0] if len(parts) == 1 else SurfaceUnion(tuple(parts))
            fld = surf.curvature(resolution)
            x, w, H0 = fld.nodes, fld.weights, fld.H
            method = "analytic-surface quadrature"
        else:
            H0, w = cotan_mean_curvature(f.mesh)
            x = f.mesh.vertices
            method = "mesh vertices"
        scale = np.abs(H0).max()
    else:
        x, _, w, H0 = _surface_nodes(s)
        scale = np.abs(H0).max()
        method = "closed-form" if f.kind == "schwarzschild" else "radial-quadrature"
    if np.abs(hg).max() > MINIMAL_TOL * scale:
        raise DomainError("boundary is not minimal in the conformal metric; identity does not apply")
    n = f.n
    omega = sphere_area(n)
    if f.kind == "harmonic":
        u = f.density.value(x, check=False)
        surface = float((H0 * u) @ w) / ((n - 1) * omega)
        volume = 0.0
    elif f.kind == "schwarzschild":
        surface = float(f.radial.u(f.radial.r0)) * f.radial.r0 ** (n - 2)
        volume = 0.0
    else:
        volume, surface = radial_mass_identity(f.radial)
    return MassIdentity(adm_mass(f), volume + surface, volume, surface, method)


def sample_exterior(f, count=100, seed=0, spread=3.0):
    """Seeded random points outside the boundary, within ``spread`` times its extent."""
    rng = np.random.default_rng(seed)
    n = f.n
    if f.kind in ("radial", "schwarzschild"):
        d = rng.standard_normal((count, n))
        d /= np.linalg.norm(d, axis=1)[:, None]
        r = f.radial.r0 * (1.0 + 1e-6 + (spread - 1.0) * rng.random(count))
        return f.center + d * r[:, None]
    surf = f.mesh if f.kind == "harmonic" else f.surface
    src = getattr(surf, "source", None)
    parts = src if isinstance(src, (list, tuple)) else ([src] if src is not None else None)

    def inside(p):
        if parts is not None:
            return np.any([q.contains(p) for q in parts], axis=0) | surf.contains(p)
        return surf.contains(p)
    centre = surf.vertices.mean(0) if isinstance(surf, TriMesh) else np.zeros(n)
    R = spread * _extent(surf)
    out = []
    while sum(len(o) for o in out) < count:
        p = centre + R * (2.0 * rng.random((4 * count, n)) - 1.0)
        p = p[np.linalg.norm(p - centre, axis=1) <= R]
        out.append(p[~inside(p)])
    return np.concatenate(out)[:count]


@dataclass(frozen=True)
class SampleCheck:
    value: float
    count: int
    seed: int
    holds: bool


def lemma6_check(f, count=100, seed=0):
    """``min u - 1`` over seeded exterior samples; must be positive."""
    pts = sample_exterior(f, count, seed)
    margin = float(f.value(pts, check=False).min() - 1.0)
    return SampleCheck(margin, count, seed, margin > 0)


def superharmonicity_check(f, count=1000, seed=0, tol=1e-6):
    """Largest sampled ``Lap u`` relative to the size of the second
    derivatives it is built from; must be <= tol."""
    pts = sample_exterior(f, count, seed)
    if f.kind == "harmonic":
        lap, scale = f.laplacian_with_scale(pts)
    elif f.kind == "unit":
        lap, scale = np.zeros(len(pts)), np.ones(len(pts))
    else:
        r = f._r(pts)
        lap = f.laplacian(pts)
        scale = np.abs(f.radial.d2u(r)) + (f.n - 1) / r * np.abs(f.radial.du(r))
    worst = float(np.max(lap / np.maximum(scale, 1e-300)))
    return SampleCheck(worst, count, seed, worst <= tol)


__all__ = [
    "GCapacity", "HarmonicMetricFactor", "MassIdentity", "RadialConformalFactor", "SampleCheck",
    "SchwarzschildFactor", "UnitFactor", "adm_mass", "alpha_min", "energy_capacity",
    "euclidean_capacity", "g_capacity", "lemma6_check", "mass_identity", "mean_curvature_g",
    "sample_exterior", "superharmonicity_check",
]
