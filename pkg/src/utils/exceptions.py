"""
Exception hierarchy for the LOVE library
Every error carries the process exit code the CLI reports for it
"""


class LoveError(Exception):
    """Base class for all library errors"""

    exit_code = 1

    def __init__(self, message: str, context: str = ""):
        self.context = context
        if context:
            message = f"[{context}] {message}"
        super().__init__(message)

    def with_context(self, context: str) -> "LoveError":
        """Return a copy of this error prefixed with a phase or row context"""
        error = type(self)(str(self), context)
        error.__cause__ = self
        return error


class ConfigError(LoveError):
    """Invalid run configuration or hyperparameters"""

    exit_code = 2


class NumericalError(LoveError):
    """Numerical failure inside a factorization or solver"""

    exit_code = 3


class PositiveDefinitenessError(NumericalError):
    """A matrix expected to be positive definite is not (even after jitter)"""


class SolverDivergenceError(NumericalError):
    """An iterative solver produced non-finite or indefinite intermediate values"""


class NegativeVarianceError(NumericalError):
    """A predictive variance came out negative beyond the clamping tolerance"""


class DataError(LoveError):
    """Problems with input data"""

    exit_code = 4


class OutOfRangeError(DataError):
    """A point lies outside the interpolable range of an inducing grid"""


class DimensionMismatchError(DataError, ValueError):
    """Operands with incompatible shapes"""
