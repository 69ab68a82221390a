"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A query point lies outside the closed domain.

    `indices` holds the offending positions when a batch of points was given.
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = list(indices) if indices is not None else None


class NoConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap; carries the last residual."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = float(residual)
        self.iterations = int(iterations)


class SingularSystemError(RuntimeError):
    """Linear system is singular or not positive definite.

    Signals scattered data without d+1 affinely independent points.
    """


class BiorthogonalityError(RuntimeError):
    """Assembled dual/primal coupling is not diagonal (or not positive)."""


class DataFormatError(ValueError):
    """Malformed input file (CSV or JSON); `line` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
