"""Error taxonomy and warning categories shared across the package.

Exceptions map onto CLI exit codes in ``knockforge.cli``: contract and
degenerate-input errors are data problems (exit 4), numerical failures are
exit 5. Warnings are the "never silent" channel for recoverable events
(non-convergence, PSD jitter repair, small samples); they are ordinary
Python warnings so callers can escalate them with ``warnings.simplefilter``.
"""

__all__ = [
    "KnockforgeError",
    "ContractViolationError",
    "DegenerateInputError",
    "NumericalFailureError",
    "NonPsdError",
    "ConvergenceWarning",
    "PsdRepairWarning",
    "SmallSampleWarning",
]


class KnockforgeError(Exception):
    """Base class for all package errors."""


class ContractViolationError(KnockforgeError):
    """An argument violates a documented precondition (shape, range, missing seed)."""


class DegenerateInputError(KnockforgeError):
    """Input is structurally unusable: constant column, zero-trace covariance, empty data."""


class NumericalFailureError(KnockforgeError):
    """A numerical routine produced non-finite values or lost positive definiteness."""


class NonPsdError(NumericalFailureError):
    """Matrix is not positive semidefinite within the allowed jitter budget."""


class ConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class PsdRepairWarning(UserWarning):
    """A matrix needed a diagonal jitter to become (numerically) PSD."""


class SmallSampleWarning(UserWarning):
    """Sample size is large enough to run but too small to be statistically meaningful."""
