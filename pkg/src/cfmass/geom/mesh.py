"""Closed triangle meshes in R^3: validation, icospheres, OBJ I/O and the
cotangent mean-curvature normal."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import (InvalidSurfaceError, MeshTopologyError, ObjParseError,
                      OrientationError, UnsupportedSurfaceError)

MAX_ICOSPHERE_LEVEL = 7


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Oriented closed triangle mesh with outward normals.

    ``source`` optionally holds the analytic surface (or list of surfaces, one
    per component) the vertices were projected onto; it lets solvers sample
    exact mean curvature at panel centroids.
    """

    vertices: np.ndarray
    faces: np.ndarray
    source: object = None
    validate: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise InvalidSurfaceError("vertices must be (V, 3) and faces (F, 3)")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidSurfaceError("face index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.validate:
            self.check()

    n = 3

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def triangles(self):
        """(F, 3, 3) array of corner coordinates."""
        if "tri" not in self._cache:
            self._cache["tri"] = np.ascontiguousarray(self.vertices[self.faces])
        return self._cache["tri"]

    @property
    def _cross(self):
        t = self.triangles
        return np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    @property
    def face_areas(self):
        if "area" not in self._cache:
            self._cache["area"] = 0.5 * np.linalg.norm(self._cross, axis=1)
        return self._cache["area"]

    @property
    def face_normals(self):
        if "normal" not in self._cache:
            c = self._cross
            self._cache["normal"] = c / np.linalg.norm(c, axis=1)[:, None]
        return self._cache["normal"]

    @property
    def centroids(self):
        return self.triangles.mean(axis=1)

    @property
    def diameters(self):
        t = self.triangles
        e = np.stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 1], t[:, 0] - t[:, 2]], 1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def components(self):
        """Label per face of its connected component."""
        if "comp" not in self._cache:
            f = self.faces
            rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
            cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
            adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n_vertices,) * 2)
            _, vlab = connected_components(adj, directed=False)
            self._cache["comp"] = vlab[f[:, 0]]
        return self._cache["comp"]

    def check(self):
        """Raise unless the mesh is closed, manifold, consistently oriented,
        outward, free of degenerate faces, and each component is a sphere."""
        f = self.faces
        if len(f) == 0:
            raise InvalidSurfaceError("mesh has no faces")
        if np.any(self.face_areas <= 1e-14 * max(1.0, float(np.abs(self.vertices).max()) ** 2)):
            raise InvalidSurfaceError("mesh has zero-area triangles")
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = directed[:, 0] * self.n_vertices + directed[:, 1]
        if len(np.unique(key)) != len(key):
            raise OrientationError("directed edge repeated: inconsistent orientation or non-manifold edge")
        rev = directed[:, 1] * self.n_vertices + directed[:, 0]
        if not np.all(np.isin(rev, key)):
            raise MeshTopologyError("mesh is not closed: some edge has only one adjacent triangle")
        comp = self.components()
        for c in np.unique(comp):
            fc = f[comp == c]
            nv = len(np.unique(fc))
            chi = nv - 3 * len(fc) // 2 + len(fc)
            if chi != 2:
                raise MeshTopologyError(f"component {c} has Euler characteristic {chi}, expected 2")
            if self._signed_volume(comp == c) <= 0:
                raise OrientationError(f"component {c} is inward oriented (negative volume)")

    def _signed_volume(self, mask=slice(None)):
        t = self.triangles[mask]
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def area(self):
        return float(self.face_areas.sum())

    def enclosed_volume(self):
        v = self._signed_volume()
        if v <= 0:
            raise OrientationError("negative enclosed volume")
        return v

    def curvature(self, resolution=None):
        from .analytic import CurvatureField
        H, A = cotan_mean_curvature(self)
        return CurvatureField(H=H, weights=A, nodes=self.vertices, normals=vertex_normals(self))

    def total_mean_curvature(self):
        H, A = cotan_mean_curvature(self)
        return float(H @ A)

    def parallel_area(self, t):
        raise UnsupportedSurfaceError("parallel_area is defined for convex analytic surfaces only")

    def scaled(self, lam):
        return TriMesh(self.vertices * lam, self.faces, source=_scale_source(self.source, lam))

    def transformed(self, rotation=None, shift=(0.0, 0.0, 0.0)):
        """Rigidly moved copy (source dropped)."""
        R = np.eye(3) if rotation is None else np.asarray(rotation, float)
        return TriMesh(self.vertices @ R.T + np.asarray(shift, float), self.faces)

    def contains(self, x):
        """Inside test via the generalized winding number."""
        return winding_number(self, x) > 0.5


def _scale_source(src, lam):
    if src is None:
        return None
    if isinstance(src, (list, tuple)):
        return [s.scaled(lam) for s in src]
    return src.scaled(lam)


def winding_number(mesh, x):
    """Solid-angle winding number of ``mesh`` around each point of ``x``."""
    x = np.atleast_2d(np.asarray(x, float))
    out = np.empty(len(x))
    tri = mesh.triangles
    for i, p in enumerate(x):
        a, b, c = tri[:, 0] - p, tri[:, 1] - p, tri[:, 2] - p
        la, lb, lc = (np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1), np.linalg.norm(c, axis=1))
        det = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
               + np.einsum("ij,ij->i", b, c) * la + np.einsum("ij,ij->i", c, a) * lb)
        out[i] = np.arctan2(det, den).sum() / (2.0 * math.pi)
    return out


def cotan_mean_curvature(mesh):
    """Vertex mean curvature from the cotangent Laplacian of positions.

    Returns ``(H, A)`` with mixed Voronoi areas ``A`` (summing to the mesh
    area).  The sign follows the vertex normal, so convex meshes give H > 0.
    """
    if "cotanH" in mesh._cache:
        return mesh._cache["cotanH"]
    V, F = mesh.vertices, mesh.faces
    t = mesh.triangles
    nv = len(V)
    lap = np.zeros((nv, 3))
    area = np.zeros(nv)
    for k in range(3):
        j, l = F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        u = t[:, (k + 1) % 3] - t[:, k]
        w = t[:, (k + 2) % 3] - t[:, k]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        cot = np.einsum("ij,ij->i", u, w) / cross
        # the angle at corner k is opposite edge (j, l)
        d = V[j] - V[l]
        np.add.at(lap, j, cot[:, None] * d)
        np.add.at(lap, l, -cot[:, None] * d)
    fa = mesh.face_areas
    ang = np.empty((len(F), 3))
    for k in range(3):
        u = t[:, (k + 1) % 3] - t[:, k]
        w = t[:, (k + 2) % 3] - t[:, k]
        ang[:, k] = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.einsum("ij,ij->i", u, w))
    obtuse = ang.max(axis=1) > 0.5 * math.pi
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        ej = np.sum((t[:, l] - t[:, k]) ** 2, axis=1)
        el = np.sum((t[:, j] - t[:, k]) ** 2, axis=1)
        vor = (ej / np.tan(ang[:, j]) + el / np.tan(ang[:, l])) / 8.0
        mixed = np.where(obtuse, np.where(ang[:, k] > 0.5 * math.pi, fa / 2.0, fa / 4.0), vor)
        np.add.at(area, F[:, k], mixed)
    hn = lap / (2.0 * area[:, None])
    H = np.einsum("ij,ij->i", hn, vertex_normals(mesh))
    mesh._cache["cotanH"] = (H, area)
    return H, area


def vertex_normals(mesh):
    nrm = np.zeros((mesh.n_vertices, 3))
    w = mesh.face_normals * mesh.face_areas[:, None]
    for k in range(3):
        np.add.at(nrm, mesh.faces[:, k], w)
    return nrm / np.linalg.norm(nrm, axis=1)[:, None]


def _icosahedron():
    p = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
                  (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)], float)
    f = np.array([(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
                  (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
                  (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)])
    return v / np.linalg.norm(v, axis=1)[:, None], f


def _subdivide(v, f):
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    base = len(v)
    nf = len(f)
    inv = inv.ravel()
    ab, bc, ca = base + inv[:nf], base + inv[nf:2 * nf], base + inv[2 * nf:]
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new = np.stack([np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
                    np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)], 1).reshape(-1, 3)
    return np.vstack([v, mid]), new


def unit_icosphere(level):
    if int(level) != level or level < 0 or level > MAX_ICOSPHERE_LEVEL:
        raise InvalidSurfaceError(f"icosphere level must be an integer in [0, {MAX_ICOSPHERE_LEVEL}]")
    v, f = _icosahedron()
    for _ in range(int(level)):
        v, f = _subdivide(v, f)
    return v, f


def make_icosphere(level, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Sphere mesh by recursive icosahedron subdivision with projection."""
    from .analytic import Sphere
    v, f = unit_icosphere(level)
    return TriMesh(radius * v + np.asarray(center, float), f,
                   source=Sphere(radius, 3, tuple(center)))


def load_obj(path, source=None):
    """Read a triangle-only OBJ file (``v`` and ``f`` records; normals and
    texture indices after slashes are ignored)."""
    verts, faces = [], []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split()
        if not s:
            continue
        try:
            if s[0] == "v":
                if len(s) < 4:
                    raise ValueError("vertex needs three coordinates")
                verts.append([float(x) for x in s[1:4]])
            elif s[0] == "f":
                if len(s) != 4:
                    raise ValueError("only triangular faces are supported")
                idx = [int(x.split("/")[0]) for x in s[1:]]
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            raise ObjParseError(f"{path}:{lineno}: {exc}") from exc
    if not verts or not faces:
        raise ObjParseError(f"{path}: no vertices or faces found")
    return TriMesh(np.array(verts), np.array(faces), source=source)


def save_obj(mesh, path):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def merge_meshes(meshes):
    verts, faces, sources, off = [], [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
        sources.append(m.source)
    src = sources if all(s is not None for s in sources) else None
    return TriMesh(np.vstack(verts), np.vstack(faces), source=src)
