"""Capacities, ADM mass and curvature functionals of exterior domains in R^n."""
import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
