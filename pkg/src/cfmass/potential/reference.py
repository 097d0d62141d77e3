"""Independent capacity oracles: conducting ellipsoid and two spheres."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from ..errors import QuadratureError


def ellipsoid_capacity(a, b, c, tol=1e-12):
    """``2 / int_0^inf ds / sqrt((a^2+s)(b^2+s)(c^2+s))``, normalized so a
    unit sphere has capacity 1."""
    def f(s):
        return 1.0 / math.sqrt((a * a + s) * (b * b + s) * (c * c + s))
    val, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=tol, limit=400)
    if err > 1e3 * tol * val:
        raise QuadratureError("ellipsoid capacity integral did not converge")
    return 2.0 / val


def two_sphere_capacity(r1, r2, d, tol=1e-14, max_images=100000):
    """Capacity of two spheres (radii ``r1, r2``, centre distance ``d``) held at
    a common potential, by Kelvin image charges on the centre line."""
    if d <= r1 + r2:
        raise ValueError("spheres overlap")
    centres = (0.0, float(d))
    radii = (float(r1), float(r2))
    total = r1 + r2
    # live images: (charge, position, sphere it sits in)
    live = [(float(r1), 0.0, 0), (float(r2), float(d), 1)]
    for _ in range(max_images):
        new = []
        for q, x, k in live:
            o = 1 - k
            dist = x - centres[o]
            qi = -q * radii[o] / abs(dist)
            xi = centres[o] + radii[o] ** 2 / dist
            new.append((qi, xi, o))
        live = new
        step = sum(q for q, _, _ in live)
        total += step
        if abs(step) < tol * abs(total):
            return total
    raise QuadratureError("image series did not converge")
