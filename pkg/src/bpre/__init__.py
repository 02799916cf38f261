"""Simulation and numerics for supercritical branching processes in random environment."""

__version__ = "0.1.0"

from .environment import (AssumptionReport, CumulantSet, EnvironmentModel, a0_bound, cumulants,
                          log_mgf, tilt, validate_assumptions)
from .offspring import OffspringLaw, law_mean, pgf_eval, sample_sum

__all__ = [
    "AssumptionReport", "CumulantSet", "EnvironmentModel", "OffspringLaw", "a0_bound", "cumulants",
    "law_mean", "log_mgf", "pgf_eval", "sample_sum", "tilt", "validate_assumptions",
]
