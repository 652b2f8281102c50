"""Exception hierarchy shared across the package.

Validation failures (bad shapes, bad parameters, unreadable files) derive
from ``ValidationError`` and are also ``ValueError`` so that plain numpy-style
call sites behave as expected.  Numerical degeneracies discovered mid-solve
derive from ``NumericalError``.
"""


class BasecorrError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BasecorrError, ValueError):
    """Invalid input rejected before any computation starts."""


class DimensionError(ValidationError):
    """Array shapes are inconsistent or below the minimum size."""


class ParameterError(ValidationError):
    """A scalar or configuration parameter is out of range."""


class DatasetFormatError(ValidationError):
    """A data file could not be parsed; message carries row/column context."""


class ZeroReferenceError(ValidationError):
    """Reference values contain zeros, so relative errors are undefined."""

    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(
            f"reference vector has zero entries at indices {self.indices}; "
            "relative differences are undefined there"
        )


class InvalidMetricError(ValidationError):
    """Metric sequences contain NaN entries."""


class NumericalError(BasecorrError):
    """A solver hit a degenerate system at runtime."""


class SingularSystemError(NumericalError):
    """The linear system to solve is singular (e.g. all-zero weights)."""


class DegenerateAnalyteError(NumericalError):
    """The analyte vector is (numerically) zero; supervised correction
    degenerates to the unsupervised smoother, which the caller should use."""


class DegenerateRegressionError(NumericalError):
    """The fitted regression vector collapsed and the baseline update is
    no longer well posed."""


class DegenerateResponseError(NumericalError):
    """The response has no variance; no regression can be fit."""


class ConstantInputError(NumericalError):
    """Correlation is undefined because an input vector is constant."""


class FeasibilityError(ValidationError):
    """A synthetic-data request cannot be satisfied as specified."""
