"""Exception hierarchy shared across the package.

Two families matter to callers: ValidationError for bad inputs (schemas,
files, assignments, malformed priors) and NumericalError for failures of
the numerics themselves (singular matrices, disconnected supports,
non-finite likelihoods). The CLI maps them to exit codes 1 and 2.
"""


class TreebayesError(Exception):
    """Base class for all package errors."""


class ValidationError(TreebayesError, ValueError):
    """Invalid input: schema mismatch, malformed data, bad parameters."""


class NumericalError(TreebayesError, ArithmeticError):
    """Numerical failure: singularity, sign loss, non-finite values."""


class DisconnectedSupportError(NumericalError):
    """The support graph is disconnected (or the minor is singular)."""
