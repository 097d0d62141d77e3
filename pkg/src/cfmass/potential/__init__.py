"""Boundary-integral solvers for exterior Laplace problems (n = 3)."""
from .bem import (FarFieldFit, LayerDensity, LayerOperators, assemble_layer_operators,
                  assemble_single_layer, evaluate, evaluate_gradient, far_field_fit, richardson,
                  robin_residual, solve_capacity, solve_robin_harmonic_metric)
from .reference import ellipsoid_capacity, two_sphere_capacity

__all__ = [
    "FarFieldFit", "LayerDensity", "LayerOperators", "assemble_layer_operators", "assemble_single_layer",
    "ellipsoid_capacity", "evaluate", "evaluate_gradient", "far_field_fit", "richardson",
    "robin_residual", "solve_capacity", "solve_robin_harmonic_metric", "two_sphere_capacity",
]
