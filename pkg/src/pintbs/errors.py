"""Exception hierarchy for the pintbs package."""

from __future__ import annotations


class PintbsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(PintbsError):
    """Invalid argument values, shapes, or precision tags."""


class ConfigError(PintbsError):
    """Malformed run configuration (unknown keys, bad values)."""


class MissingArtifactError(PintbsError):
    """A required input file (weights, fixtures, config) does not exist."""


class WeightFormatError(PintbsError):
    """A weight or fixture file does not conform to the binary format."""


class NumericalError(PintbsError):
    """A numerical routine produced an unusable result."""


class SolverBreakdownError(NumericalError):
    """Krylov solver breakdown (curvature or rho collapsed).

    Carries the iteration index at which the breakdown occurred.
    """

    def __init__(self, message: str, *, iteration: int) -> None:
        super().__init__(message)
        self.iteration = iteration
