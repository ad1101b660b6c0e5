"""mkvlab: a numerical laboratory for mean-field stochastic dynamics.

Subpackages cover empirical-measure geometry, comparison functionals of
Osgood and Bihari type, one-sided smoothing constructions, stability and
growth coefficient calculus, a deterministic particle/SDE engine, a
fixed-point solver for measure-coupled dynamics, and long-run stability
diagnostics. The `mkvlab` console script drives packaged experiments.
"""

__version__ = "0.1.0"

from . import exceptions
from .exceptions import (
    Error,
    ValidationError,
    DomainError,
    ConvergenceError,
    SimulationError,
    ConfigError,
)

__all__ = [
    "exceptions",
    "Error",
    "ValidationError",
    "DomainError",
    "ConvergenceError",
    "SimulationError",
    "ConfigError",
    "__version__",
]
