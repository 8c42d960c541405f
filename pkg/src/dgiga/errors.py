"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DgigaError(Exception):
    """Base class for all package errors."""


class DomainError(DgigaError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigError(DgigaError, ValueError):
    """Inconsistent or malformed configuration."""


class DegenerateGeometryError(DgigaError):
    """A patch map has a vanishing or negative measure somewhere."""


class GlueError(DgigaError):
    """Two patch sides do not coincide under the declared correspondence."""


class UnknownNameError(DgigaError, KeyError):
    """Lookup of a registry name that does not exist."""

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class SolverError(DgigaError):
    """Base class for linear solver failures."""

    def __init__(self, message: str, report: object | None = None) -> None:
        super().__init__(message)
        self.report = report


class BreakdownError(SolverError):
    """Conjugate gradients met non-positive curvature."""


class NotConvergedError(SolverError):
    """The iteration budget ran out before reaching the tolerance."""


class SingularMatrixError(SolverError):
    """A direct solve found the matrix singular to working precision."""
