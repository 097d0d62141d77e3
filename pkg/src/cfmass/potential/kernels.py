"""Flat-triangle Laplace kernels.

All integrals here are of the bare kernel ``1/|x - y|`` over a flat triangle
with unit density; callers apply the ``1/(4*pi)`` normalization.  Near-field
entries use the closed-form potential and field of a uniformly charged
triangle, far-field entries fall back to point rules.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# Far-field switch, in units of panel diameter measured from the centroid.
NEAR_RATIO = 2.5
MID_RATIO = 6.0

# Symmetric 6-point rule, exact for degree-4 polynomials (Dunavant).
_W6 = np.array([0.223381589678011, 0.223381589678011, 0.223381589678011,
                0.109951743655322, 0.109951743655322, 0.109951743655322])
_A6 = np.array([[0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459]])


@njit(cache=True, fastmath=False)
def _edge_log(rp, rm, lp, lm):
    # ln((R+ + l+)/(R- + l-)) written to avoid cancellation when l < 0.
    if lp + lm >= 0.0:
        num = rp + lp
        den = rm + lm
    else:
        num = rm - lm
        den = rp - lp
    if num <= 0.0 or den <= 0.0:
        return 0.0
    return math.log(num / den)


@njit(cache=True, fastmath=False)
def tri_potential_field(x, v0, v1, v2, want_grad):
    """Potential and gradient at ``x`` of a unit-density flat triangle.

    Returns ``(I, gx, gy, gz)`` with ``I = int 1/|x-y| dS(y)`` and ``g`` its
    gradient in ``x``.  On the panel plane the normal gradient component is
    the one-sided limit from the side the normal points to.
    """
    e1x = v1[0] - v0[0]
    e1y = v1[1] - v0[1]
    e1z = v1[2] - v0[2]
    e2x = v2[0] - v0[0]
    e2y = v2[1] - v0[1]
    e2z = v2[2] - v0[2]
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    nx /= nn
    ny /= nn
    nz /= nn
    d = nx * (x[0] - v0[0]) + ny * (x[1] - v0[1]) + nz * (x[2] - v0[2])
    ad = abs(d)
    px = x[0] - d * nx
    py = x[1] - d * ny
    pz = x[2] - d * nz

    total = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    beta = 0.0
    for k in range(3):
        if k == 0:
            a = v0
            b = v1
        elif k == 1:
            a = v1
            b = v2
        else:
            a = v2
            b = v0
        lx = b[0] - a[0]
        ly = b[1] - a[1]
        lz = b[2] - a[2]
        ll = math.sqrt(lx * lx + ly * ly + lz * lz)
        lx /= ll
        ly /= ll
        lz /= ll
        # outward in-plane edge normal u = l x n
        ux = ly * nz - lz * ny
        uy = lz * nx - lx * nz
        uz = lx * ny - ly * nx
        lp = (b[0] - px) * lx + (b[1] - py) * ly + (b[2] - pz) * lz
        lm = (a[0] - px) * lx + (a[1] - py) * ly + (a[2] - pz) * lz
        p0 = (a[0] - px) * ux + (a[1] - py) * uy + (a[2] - pz) * uz
        r0sq = p0 * p0 + d * d
        rp = math.sqrt(r0sq + lp * lp)
        rm = math.sqrt(r0sq + lm * lm)
        f = _edge_log(rp, rm, lp, lm)
        if p0 != 0.0:
            bk = (math.atan2(p0 * lp, r0sq + ad * rp)
                  - math.atan2(p0 * lm, r0sq + ad * rm))
        else:
            bk = 0.0
        total += p0 * f - ad * bk
        beta += bk
        if want_grad:
            gx -= ux * f
            gy -= uy * f
            gz -= uz * f
    if want_grad:
        sgn = 1.0 if d >= 0.0 else -1.0
        gx -= sgn * beta * nx
        gy -= sgn * beta * ny
        gz -= sgn * beta * nz
    return total, gx, gy, gz


@njit(cache=True, fastmath=False)
def _point_rule(x, v0, v1, v2, area, npts, want_grad):
    total = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    if npts == 1:
        cx = (v0[0] + v1[0] + v2[0]) / 3.0 - x[0]
        cy = (v0[1] + v1[1] + v2[1]) / 3.0 - x[1]
        cz = (v0[2] + v1[2] + v2[2]) / 3.0 - x[2]
        r = math.sqrt(cx * cx + cy * cy + cz * cz)
        total = area / r
        if want_grad:
            r3 = area / (r * r * r)
            gx = cx * r3
            gy = cy * r3
            gz = cz * r3
        return total, gx, gy, gz
    for q in range(6):
        w = _W6[q] * area
        yx = _A6[q, 0] * v0[0] + _A6[q, 1] * v1[0] + _A6[q, 2] * v2[0] - x[0]
        yy = _A6[q, 0] * v0[1] + _A6[q, 1] * v1[1] + _A6[q, 2] * v2[1] - x[1]
        yz = _A6[q, 0] * v0[2] + _A6[q, 1] * v1[2] + _A6[q, 2] * v2[2] - x[2]
        r = math.sqrt(yx * yx + yy * yy + yz * yz)
        total += w / r
        if want_grad:
            r3 = w / (r * r * r)
            gx += yx * r3
            gy += yy * r3
            gz += yz * r3
    return total, gx, gy, gz


@njit(cache=True, fastmath=False)
def panel_integral(x, v0, v1, v2, centroid, area, diam, want_grad):
    dx = x[0] - centroid[0]
    dy = x[1] - centroid[1]
    dz = x[2] - centroid[2]
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist < NEAR_RATIO * diam:
        return tri_potential_field(x, v0, v1, v2, want_grad)
    if dist < MID_RATIO * diam:
        return _point_rule(x, v0, v1, v2, area, 6, want_grad)
    return _point_rule(x, v0, v1, v2, area, 1, want_grad)


@njit(parallel=True, cache=True)
def assemble_matrices(tri, cent, normals, area, diam, want_adjoint, out_s, out_k):
    """Fill ``out_s[i, j] = int_j 1/|x_i - y|`` and, optionally, the adjoint
    double-layer ``out_k[i, j] = n_i . grad_x int_j 1/|x_i - y|``."""
    n = tri.shape[0]
    for i in prange(n):
        x = cent[i]
        for j in range(n):
            if i == j:
                val, gx, gy, gz = tri_potential_field(x, tri[j, 0], tri[j, 1], tri[j, 2], False)
                out_s[i, j] = val
                if want_adjoint:
                    out_k[i, j] = 0.0
                continue
            val, gx, gy, gz = panel_integral(x, tri[j, 0], tri[j, 1], tri[j, 2], cent[j],
                                             area[j], diam[j], want_adjoint)
            out_s[i, j] = val
            if want_adjoint:
                out_k[i, j] = normals[i, 0] * gx + normals[i, 1] * gy + normals[i, 2] * gz


@njit(parallel=True, cache=True)
def evaluate_points(points, tri, cent, area, diam, density, want_grad, exact, out_val, out_grad):
    """Potential ``sum_j q_j int_j 1/|x - y|`` (and gradient) at many points.

    With ``exact`` every panel uses the closed form, which makes the result
    a smooth function of the point (no switching between rules).
    """
    m = points.shape[0]
    n = tri.shape[0]
    for i in prange(m):
        x = points[i]
        s = 0.0
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for j in range(n):
            q = density[j]
            if q == 0.0:
                continue
            if exact:
                val, gx, gy, gz = tri_potential_field(x, tri[j, 0], tri[j, 1], tri[j, 2], want_grad)
            else:
                val, gx, gy, gz = panel_integral(x, tri[j, 0], tri[j, 1], tri[j, 2], cent[j],
                                                 area[j], diam[j], want_grad)
            s += q * val
            if want_grad:
                sx += q * gx
                sy += q * gy
                sz += q * gz
        out_val[i] = s
        if want_grad:
            out_grad[i, 0] = sx
            out_grad[i, 1] = sy
            out_grad[i, 2] = sz
