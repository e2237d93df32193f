"""Exception types raised across the package.

Every error derives from :class:`ReadoutModelError` so callers (the CLI in
particular) can catch the whole family in one place.
"""

__all__ = [
    "ReadoutModelError",
    "ParameterDomainError",
    "SingularityError",
    "FitRankError",
    "IterationLimitError",
    "IntegrationLimitError",
    "TruncationError",
    "RankError",
    "SearchDomainError",
]


class ReadoutModelError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(ReadoutModelError, ValueError):
    """A parameter lies outside its physical or numerical domain."""


class SingularityError(ReadoutModelError, ArithmeticError):
    """A perturbative expression hit a resonance (zero denominator)."""


class FitRankError(ReadoutModelError, ValueError):
    """Flux-sweep data cannot determine the model parameters."""


class IterationLimitError(ReadoutModelError, RuntimeError):
    """An iterative fit did not converge within its iteration budget."""


class IntegrationLimitError(ReadoutModelError, RuntimeError):
    """A time integration did not reach convergence within ``max_steps``."""


class TruncationError(ReadoutModelError, RuntimeError):
    """Population leaked into the top level of a truncated Hilbert space."""


class RankError(ReadoutModelError, ValueError):
    """Training data has a degenerate (zero-scatter) covariance."""


class SearchDomainError(ReadoutModelError, RuntimeError):
    """Every candidate of a parameter search failed to evaluate."""
