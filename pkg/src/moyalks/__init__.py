"""Moyal star products, phase-space flows and dynamical entropy on flat 2-D phase spaces."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DegenerateFitError, MoyalKSError, PhaseSpaceMismatch,
                     ResolutionError, StabilityError, StatisticsError, UnsupportedError)
from .geometry import Observable, PhaseSpace, poisson_bracket
from .starproduct import classical_limit_fit, moyal_bracket, moyal_product
from .flow import FlowSpec, liouville_step, moyal_step, time_one_map

__all__ = [
    "__version__", "MoyalKSError", "PhaseSpaceMismatch", "ResolutionError", "DegenerateFitError",
    "StabilityError", "StatisticsError", "ConfigurationError", "UnsupportedError", "Observable",
    "PhaseSpace", "poisson_bracket", "moyal_product", "moyal_bracket", "classical_limit_fit", "FlowSpec",
    "liouville_step", "moyal_step", "time_one_map",
]
