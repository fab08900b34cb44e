"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numeric/training problems exit 3.
"""


class RadistortError(Exception):
    """Base class for all toolkit errors."""


class DomainError(RadistortError, ValueError):
    """An argument is outside the mathematical domain (non-finite, s <= 0, ...)."""


class DataError(RadistortError):
    """A file or dataset is missing, truncated, or malformed."""


class NumericError(RadistortError):
    """A numeric procedure failed (divergence, fold-over, non-convergence)."""


class IterationError(NumericError):
    """An iterative solver did not converge within its budget."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class FoldedDistortionError(NumericError):
    """Coefficients fold the image: the radial map is not monotonic."""


class TrainingError(NumericError):
    """Training aborted; carries the last finite-loss weights when available."""

    def __init__(self, message, last_weights=None):
        super().__init__(message)
        self.last_weights = last_weights
