"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """An argument is outside the documented domain of an operation."""


class PoleError(ArithmeticError):
    """A point sits on (or numerically at) the excluded pole of a stereographic chart."""

    def __init__(self, message, count=1):
        super().__init__(message)
        self.count = count


class NumericalError(RuntimeError):
    """A factorization, solve or quadrature did not reach its tolerance."""


class IntegrityError(RuntimeError):
    """Cached chain state disagrees with a fresh recomputation."""
