"""Dimensional constants for spheres and balls in R^n."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


def sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def ball_volume(n: int) -> float:
    """Volume of the unit n-ball."""
    return sphere_area(n) / n


@dataclass(frozen=True)
class Constants:
    n: int
    omega: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"ambient dimension must be an integer >= 3, got {self.n}")
        object.__setattr__(self, "omega", sphere_area(self.n))
        object.__setattr__(self, "beta", ball_volume(self.n))
