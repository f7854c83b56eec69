"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to.
"""


class KganError(Exception):
    exit_code = 1


class InvalidInputError(KganError, ValueError):
    exit_code = 2


class UnsupportedOperationError(KganError, NotImplementedError):
    exit_code = 2


class InvalidStateError(KganError, RuntimeError):
    exit_code = 2


class InfeasiblePointError(InvalidInputError):
    pass


class NumericError(KganError, ArithmeticError):
    """Non-finite value where a finite one is required."""

    exit_code = 3

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class DivergedError(NumericError):
    def __init__(self, message, iteration):
        super().__init__(message, location=iteration)
        self.iteration = iteration


class BudgetExceededError(KganError, RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    exit_code = 3

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(InvalidInputError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
