"""Exception types. Kept deliberately flat: callers mostly care about the
config/solver distinction because the CLI maps them to exit codes 1 and 2."""

from __future__ import annotations


class QShootError(Exception):
    """Base class for everything raised deliberately by this package."""


class ConfigError(QShootError):
    """Bad parameters, bad config keys, preconditions violated by the caller."""


class AdmissionError(ConfigError):
    """Inputs outside the regime a routine is valid for (overflow budget,
    tail expansion not applicable, beta out of range, ...)."""


class SolverError(QShootError):
    """Integration failed. `last_state` carries the last accepted sample."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class EventNotFoundError(SolverError):
    """No sign change bracketed before the integration floor."""
