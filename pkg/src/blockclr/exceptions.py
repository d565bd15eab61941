"""Exception hierarchy. Each class carries the CLI exit code of its category."""


class BlockClrError(Exception):
    exit_code = 1


class InvalidArgumentError(BlockClrError, ValueError):
    """Bad shapes, out-of-range parameters, unknown options."""

    exit_code = 2


class DataValidationError(BlockClrError, ValueError):
    """The matched dataset violates its structural invariants."""

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(BlockClrError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    pass


class NoSignalError(NumericalError):
    pass
