"""Shooting solver and asymptotics checks for quasilinear radial Dirichlet
problems with exponential-type growth."""

__version__ = "0.1.0"

from .config import ProblemConfig
from .errors import (AdmissionError, ConfigError, EventNotFoundError,
                     QShootError, SolverError)
from .nonlinearity import Nonlinearity, make_nonlinearity

__all__ = [
    "__version__", "ProblemConfig", "Nonlinearity", "make_nonlinearity",
    "QShootError", "ConfigError", "AdmissionError", "SolverError",
    "EventNotFoundError",
]
