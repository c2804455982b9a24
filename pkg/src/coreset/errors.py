"""Exception hierarchy shared by every module.

The CLI maps :class:`InputError` to exit code 1 and :class:`NumericalError`
(including convergence failures) to exit code 2.
"""


class CoresetError(Exception):
    """Base class for all package errors."""


class InputError(CoresetError, ValueError):
    """Invalid arguments, malformed data or configuration."""


class SchemaError(InputError):
    def __init__(self, expected, actual):
        self.expected = list(expected)
        self.actual = list(actual)
        super().__init__(f"header mismatch: expected {self.expected}, got {self.actual}")


class ParseError(InputError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class CapabilityError(CoresetError, TypeError):
    """The model does not provide a closed form the caller asked for."""


class NumericalError(CoresetError, ArithmeticError):
    """Factorization failure, non-finite values, or an indefinite matrix."""


class IndefiniteHessianError(NumericalError):
    """Raised by the quadratic weight update; callers fall back to an SGD step."""


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None, iteration=None):
        self.last_iterate = last_iterate
        self.iteration = iteration
        super().__init__(message)
