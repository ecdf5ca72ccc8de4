"""Shared exception types."""


class ParameterError(ValueError):
    """Raised when a parameter set violates its documented invariants."""


class DomainError(ValueError):
    """Raised when an evaluation point lies outside the valid domain."""


class GridError(ValueError):
    """Raised when a sampling grid is too coarse for the requested evaluation."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative numerical routine fails to converge."""


class TruncationError(RuntimeError):
    """Raised when a Fock-space truncation is detected to be too small."""


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""
