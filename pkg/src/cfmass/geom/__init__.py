"""Closed hypersurfaces and their curvature integrals."""
from __future__ import annotations

import numpy as np

from ..errors import MeanConvexityError, UnsupportedSurfaceError
from .analytic import AxisymProfile, CurvatureField, Ellipsoid, Sphere, SurfaceUnion
from .constants import Constants, ball_volume, sphere_area
from .mesh import (TriMesh, cotan_mean_curvature, load_obj, make_icosphere, merge_meshes,
                   save_obj, unit_icosphere, winding_number)

__all__ = [
    "AxisymProfile", "Constants", "CurvatureField", "Ellipsoid", "Sphere", "SurfaceUnion", "TriMesh",
    "area", "ball_volume", "cotan_mean_curvature", "enclosed_volume", "load_obj", "make_icosphere",
    "mean_curvature", "merge_meshes", "mesh_surface", "panel_mean_curvature", "parallel_area",
    "save_obj", "sphere_area", "total_mean_curvature", "unit_icosphere", "winding_number",
]


def area(s):
    return float(s.area())


def enclosed_volume(s):
    return float(s.enclosed_volume())


def mean_curvature(s, resolution=None, require_convex=True):
    """Curvature field of ``s``; raises if H <= 0 at any node unless
    ``require_convex`` is false."""
    field = s.curvature(resolution)
    if require_convex and np.any(field.H <= 0):
        raise MeanConvexityError(f"surface is not mean-convex: min H = {field.H.min():.3e}")
    return field


def total_mean_curvature(s):
    mean_curvature(s)
    return float(s.total_mean_curvature())


def parallel_area(s, t):
    """Area of the outer parallel surface at distance ``t`` (Steiner polynomial)."""
    if t < 0:
        raise ValueError("offset must be non-negative")
    if not getattr(s, "is_convex", lambda: False)():
        raise UnsupportedSurfaceError("parallel_area requires a convex analytic surface")
    return float(s.parallel_area(t))


def mesh_surface(s, level):
    """Triangulate an analytic n = 3 surface from a projected icosphere."""
    if isinstance(s, TriMesh):
        return s
    return s.to_mesh(level)


def panel_mean_curvature(mesh):
    """Mean curvature per panel: exact at the projected centroid when the
    mesh remembers its analytic source, otherwise the face average of the
    cotangent vertex curvature."""
    src = mesh.source
    cent = mesh.centroids
    if src is None:
        H, _ = cotan_mean_curvature(mesh)
        return H[mesh.faces].mean(axis=1)
    if not isinstance(src, (list, tuple)):
        return src.mean_curvature_at(cent)
    comp = mesh.components()
    out = np.empty(mesh.n_faces)
    # components are numbered in vertex order, which follows the merge order
    order = np.unique(comp, return_index=True)[1]
    labels = comp[np.sort(order)]
    for part, lab in zip(src, labels):
        sel = comp == lab
        out[sel] = part.mean_curvature_at(cent[sel])
    return out
