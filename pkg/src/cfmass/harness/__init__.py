"""Configuration, per-case inequality reports and the command line interface."""
from .config import CaseSpec, ExperimentConfig, load_config, validate
from .report import (EQ_TOL, Check, InequalityEntry, InequalityReport, Quantity, SandwichEntry,
                     convergence_study, run_case)

__all__ = [
    "EQ_TOL", "CaseSpec", "Check", "ExperimentConfig", "InequalityEntry", "InequalityReport", "Quantity",
    "SandwichEntry", "convergence_study", "load_config", "run_case", "validate",
]
