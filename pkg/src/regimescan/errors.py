"""Exception types shared across the package."""


class RegimescanError(Exception):
    """Base class for all package-specific errors."""


class DataValidationError(RegimescanError):
    """Malformed input data, misaligned panels, or out-of-range configuration."""


class RankDeficiencyError(RegimescanError):
    """A design matrix (or candidate subset) is not of full column rank.

    ``columns`` holds the offending column identifiers (indices or labels).
    """

    def __init__(self, columns, message=None):
        self.columns = tuple(columns)
        if message is None:
            message = f"design matrix is rank deficient; offending columns: {list(self.columns)}"
        super().__init__(message)


class EnumerationLimitError(RegimescanError):
    """Exhaustive subset search refused because the predictor count exceeds the guard."""


class ConvergenceError(RegimescanError):
    """An iterative solver failed to reach its tolerance.

    Carries the last iterate so callers can inspect how close it got.
    """

    def __init__(self, message, last_fit=None, kkt_violation=None):
        super().__init__(message)
        self.last_fit = last_fit
        self.kkt_violation = kkt_violation


class NumericalError(RegimescanError):
    """A numerical operation produced an unusable result (singular matrix, degenerate correlation)."""
