"""Exception types raised across the package."""


class IvSelectError(Exception):
    """Base class for all package errors."""


class InputError(IvSelectError, ValueError):
    """Malformed input: wrong shapes, non-finite values, bad column names."""


class ConfigError(IvSelectError, ValueError):
    """Invalid configuration values."""


class SingularMatrixError(IvSelectError, ValueError):
    """Rank-deficient design in a least-squares fit.

    Carries the name of the offending column when it can be identified.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DegenerateOutcomeError(IvSelectError, ValueError):
    """Outcome unusable for the requested family (e.g. single-class binomial)."""


class DegenerateInstrumentError(IvSelectError, ValueError):
    """Candidate instrument has no usable variation."""


class TrimmingError(IvSelectError, ValueError):
    """Propensity value outside the trimmed range passed to a score."""


class InsufficientDataError(IvSelectError, ValueError):
    """Too few observations for the requested split or fit."""


class FoldDegeneracyError(IvSelectError, RuntimeError):
    """A training fold lost an instrument bin needed for nuisance fitting."""


class DegenerateVarianceError(IvSelectError, RuntimeError):
    """Score variance estimate is zero; the test statistic is undefined."""
