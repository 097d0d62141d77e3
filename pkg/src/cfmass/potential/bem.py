"""Single-layer collocation for exterior Laplace problems in R^3.

Densities are piecewise constant on panels and collocated at centroids.  The
kernel is normalized as ``1/(4*pi*|x - y|)`` so the total charge of the
capacity density equals the capacity.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, gmres

from ..errors import DomainError, MeanConvexityError, SolverError
from ..geom import TriMesh, panel_mean_curvature
from . import kernels

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
KAPPA3 = 0.25  # (n - 2) / (2 (n - 1)) at n = 3
# Dense float64 storage up to this many bytes, float32 beyond, refuse past the cap.
DOUBLE_BYTES = 1.2e9
MAX_BYTES = 3.6e9
RCOND_MIN = 1e-13
GMRES_RTOL = 1e-7


def _panel_data(mesh):
    tri = mesh.triangles
    return (tri, np.ascontiguousarray(mesh.centroids), np.ascontiguousarray(mesh.face_normals),
            np.ascontiguousarray(mesh.face_areas), np.ascontiguousarray(mesh.diameters))


def _storage_dtype(n, nmat, dtype=None):
    if dtype is not None:
        return np.dtype(dtype)
    need = 8.0 * n * n * nmat
    if need > MAX_BYTES * 2:
        raise MemoryError(f"{nmat} dense {n}x{n} operators exceed the memory cap")
    return np.dtype(np.float64) if need <= DOUBLE_BYTES else np.dtype(np.float32)


def _check_memory(n, nmat, dtype):
    need = dtype.itemsize * n * n * nmat
    if need > MAX_BYTES:
        raise MemoryError(f"{nmat} dense {n}x{n} {dtype} operators need {need / 1e9:.1f} GB")


class LayerOperators:
    """Lazily assembled collocation matrices for one mesh.

    ``S[i, j] = int_{panel j} G(x_i, y) dS(y)`` and ``Kp`` is the adjoint
    double layer ``n_i . grad_x S`` with its diagonal fixed by the discrete
    Gauss law ``sum_i a_i (Kp - I/2)[i, j] = -a_j``.
    """

    def __init__(self, mesh: TriMesh, dtype=None):
        self.mesh = mesh
        self._dtype = dtype
        self._S = None
        self._Kp = None
        self._lu = None

    @property
    def n(self):
        return self.mesh.n_faces

    def _assemble(self, adjoint):
        n = self.n
        dt = _storage_dtype(n, 2 if adjoint else 1, self._dtype)
        _check_memory(n, 2 if adjoint else 1, dt)
        S = np.empty((n, n), dtype=dt)
        K = np.empty((n, n), dtype=dt) if adjoint else np.empty((1, 1), dtype=dt)
        tri, cent, nrm, area, diam = _panel_data(self.mesh)
        kernels.assemble_matrices(tri, cent, nrm, area, diam, adjoint, S, K)
        S *= dt.type(1.0 / FOUR_PI)
        self._S = S
        if adjoint:
            K *= dt.type(1.0 / FOUR_PI)
            colsum = area.astype(dt) @ K
            d = (-0.5 * area - colsum.astype(float)) / area
            K[np.diag_indices(n)] = d
            self._Kp = K

    @property
    def S(self):
        if self._S is None:
            self._assemble(False)
        return self._S

    @property
    def Kp(self):
        if self._Kp is None:
            self._S = None
            self._lu = None
            self._assemble(True)
        return self._Kp

    @property
    def dense(self):
        return self.S.dtype == np.float64

    def solve_single_layer(self, rhs):
        """Solve ``S q = rhs``; ``rhs`` may hold several columns."""
        S = self.S
        if self.dense:
            if self._lu is None:
                lu, piv = linalg.lu_factor(S, check_finite=False)
                anorm = np.linalg.norm(S, 1)
                rcond, info = linalg.lapack.dgecon(lu, anorm, norm="1")
                if info != 0 or rcond < RCOND_MIN:
                    raise SolverError("single-layer matrix is numerically singular",
                                      condition=1.0 / max(rcond, 1e-300))
                self._lu = (lu, piv, 1.0 / rcond)
            lu, piv, _ = self._lu
            return linalg.lu_solve((lu, piv), rhs, check_finite=False)
        rhs = np.asarray(rhs, float)
        if rhs.ndim == 2:
            return np.stack([self._gmres(S, rhs[:, k]) for k in range(rhs.shape[1])], 1)
        return self._gmres(S, rhs)

    @property
    def condition(self):
        return None if self._lu is None else self._lu[2]

    @staticmethod
    def _gmres(A, rhs):
        diag = np.diag(A).astype(float)
        n = len(rhs)
        op = LinearOperator((n, n), matvec=lambda x: A @ x.astype(A.dtype), dtype=float)
        pre = LinearOperator((n, n), matvec=lambda x: x / diag, dtype=float)
        x, info = gmres(op, rhs, M=pre, rtol=GMRES_RTOL, restart=200, maxiter=20)
        res = float(np.linalg.norm(op @ x - rhs) / np.linalg.norm(rhs))
        if info != 0 or res > 10 * GMRES_RTOL:
            raise SolverError("GMRES did not converge", residual=res)
        return x

    def solve_general(self, A, rhs):
        """Solve a square system built from these operators."""
        if A.dtype == np.float64:
            try:
                x = linalg.solve(A, rhs, check_finite=False)
            except linalg.LinAlgError as exc:
                raise SolverError(str(exc)) from exc
            res = float(np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs))
            if not np.isfinite(res) or res > 1e-8:
                raise SolverError("dense solve left a large residual", residual=res)
            return x
        return self._gmres(A, rhs)


def assemble_single_layer(mesh, dtype=None):
    """Dense single-layer collocation matrix of ``mesh``."""
    return LayerOperators(mesh, dtype).S


def assemble_layer_operators(mesh, dtype=None):
    """``(S, Kp)`` with the Gauss-law diagonal on ``Kp``."""
    ops = LayerOperators(mesh, dtype)
    K = ops.Kp
    return ops.S, K


@dataclass(frozen=True, eq=False)
class LayerDensity:
    """Piecewise-constant single-layer density on a mesh.

    ``kind`` selects the represented field: ``"capacity"`` gives
    ``phi = 1 - Sq`` and ``"harmonic"`` gives ``u = 1 + Sq``.
    """

    mesh: TriMesh
    q: np.ndarray
    kind: str = "capacity"
    meta: dict = field(default_factory=dict)

    @property
    def total_charge(self):
        return float(self.q @ self.mesh.face_areas)

    def evaluate(self, x, check=True):
        return evaluate(self, x, check)

    def evaluate_gradient(self, x, check=True):
        return evaluate_gradient(self, x, check)

    def value(self, x, check=True):
        s = evaluate(self, x, check)
        return 1.0 + s if self.kind == "harmonic" else 1.0 - s

    def gradient(self, x, check=True):
        g = evaluate_gradient(self, x, check)
        return g if self.kind == "harmonic" else -g

    def value_and_gradient(self, x, check=True):
        s, g = _field(self, x, True, check)
        if self.kind == "harmonic":
            return 1.0 + s, g
        return 1.0 - s, -g

    def to_csv(self, path):
        cent = self.mesh.centroids
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["panel", "cx", "cy", "cz", "area", "q"])
            for i, (c, a, q) in enumerate(zip(cent, self.mesh.face_areas, self.q)):
                w.writerow([i, f"{c[0]:.17g}", f"{c[1]:.17g}", f"{c[2]:.17g}", f"{a:.17g}", f"{q:.17g}"])


def _exterior_check(mesh, x):
    src = mesh.source
    if src is not None:
        parts = src if isinstance(src, (list, tuple)) else [src]
        inside = np.any([p.contains(x) for p in parts], axis=0)
    else:
        inside = mesh.contains(x)
    if np.any(inside):
        raise DomainError(f"{int(np.sum(inside))} evaluation point(s) lie inside the domain")


def _field(density, x, want_grad, check, exact=False):
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, float)))
    if check:
        _exterior_check(density.mesh, x)
    tri, cent, _, area, diam = _panel_data(density.mesh)
    val = np.empty(len(x))
    grad = np.empty((len(x), 3)) if want_grad else np.empty((1, 3))
    kernels.evaluate_points(x, tri, cent, area, diam, np.ascontiguousarray(density.q, dtype=float),
                            want_grad, exact, val, grad)
    return val / FOUR_PI, grad / FOUR_PI


def evaluate(density, x, check=True, exact=False):
    """Single-layer potential ``Sq`` at exterior points.

    ``exact`` integrates every panel in closed form instead of switching to
    point rules away from the panel (slower, but smooth in ``x``).
    """
    return _field(density, x, False, check, exact)[0]


def evaluate_gradient(density, x, check=True):
    """Gradient of ``Sq`` at exterior points, shape ``(m, 3)``."""
    return _field(density, x, True, check)[1]


def solve_capacity(mesh, a=1.0, b=0.0, ops=None):
    """Equilibrium density for boundary value ``a - b`` and the capacity.

    With ``a = 1, b = 0`` this is the Euclidean capacity ``C0 = Q / (4 pi)``;
    in general the returned value is ``(a - b) Q / (4 pi)``, the capacity
    with boundary values ``b`` on the surface and ``a`` at infinity.
    """
    ops = ops or LayerOperators(mesh)
    q = ops.solve_single_layer(np.full(mesh.n_faces, float(a - b)))
    if (a - b) > 0 and np.any(q <= 0):
        log.warning("capacity density is not positive on every panel")
    dens = LayerDensity(mesh, q, "capacity",
                        {"panels": mesh.n_faces, "method": "lu" if ops.dense else "gmres",
                         "condition": ops.condition})
    return dens, (a - b) * dens.total_charge / FOUR_PI


def solve_robin_harmonic_metric(mesh, H0=None, ops=None):
    """Harmonic-metric factor ``u = 1 + Sq`` with ``u_nu = -H0 u / 4``.

    ``H0`` is the mean curvature per panel (defaults to the exact value at
    the projected centroid when the mesh has an analytic source).  Returns
    the density and the mass ``m = 2 Q / (4 pi)``.
    """
    H = panel_mean_curvature(mesh) if H0 is None else np.asarray(getattr(H0, "H", H0), float)
    if H.shape != (mesh.n_faces,):
        raise ValueError("H0 must hold one value per panel")
    if np.any(H <= 0):
        raise MeanConvexityError(f"panel mean curvature not positive (min {H.min():.3e})")
    ops = ops or LayerOperators(mesh)
    K = ops.Kp
    S = ops.S
    A = K.copy()
    A += (KAPPA3 * H)[:, None].astype(A.dtype) * S
    A[np.diag_indices(mesh.n_faces)] -= 0.5
    rhs = -KAPPA3 * H
    q = ops.solve_general(A, rhs)
    dens = LayerDensity(mesh, q, "harmonic",
                        {"panels": mesh.n_faces, "method": "lu" if A.dtype == np.float64 else "gmres"})
    return dens, 2.0 * dens.total_charge / FOUR_PI


def robin_residual(density, H0=None, ops=None):
    """Mean curvature of the conformal metric per panel, ``u^-2 (H0 + 4 u_nu / u)``
    evaluated from the discrete jump relation."""
    mesh = density.mesh
    ops = ops or LayerOperators(mesh)
    H = panel_mean_curvature(mesh) if H0 is None else np.asarray(H0, float)
    q = density.q
    u = 1.0 + ops.S @ q
    un = -0.5 * q + ops.Kp @ q
    return (H + 4.0 * un / u) / u ** 2


@dataclass(frozen=True)
class FarFieldFit:
    coefficient: float
    residual: float
    charge_value: float


def _sphere_nodes(m=24):
    x, w = np.polynomial.legendre.leggauss(m)
    ph = 2.0 * math.pi * np.arange(2 * m) / (2 * m)
    ct = np.repeat(x, 2 * m)
    st = np.sqrt(1.0 - ct ** 2)
    p = np.tile(ph, m)
    pts = np.stack([st * np.cos(p), st * np.sin(p), ct], 1)
    return pts, np.repeat(w, 2 * m) * (math.pi / m) / (4.0 * math.pi)


def far_field_fit(density, radii, tol=1e-3):
    """Least-squares ``c`` in ``avg_{|x|=r} Sq = c / r`` over the given radii.

    ``charge_value`` is the exact monopole ``Q / (4 pi)`` for comparison.
    """
    radii = np.asarray(radii, float)
    pts, w = _sphere_nodes()
    avg = np.array([w @ evaluate(density, r * pts, check=False) for r in radii])
    basis = 1.0 / radii
    c = float(basis @ avg / (basis @ basis))
    scale = max(abs(avg).max(), 1e-300)
    res = float(np.abs(avg - c * basis).max() / scale) if np.any(avg) else 0.0
    if res > tol:
        log.warning("far-field fit residual %.2e exceeds %.1e", res, tol)
    return FarFieldFit(c, res, density.total_charge / FOUR_PI)


def richardson(coarse, fine, order=2.0, ratio=2.0):
    """Extrapolate two values whose error scales like ``h**order``."""
    f = ratio ** order
    return (f * fine - coarse) / (f - 1.0)
