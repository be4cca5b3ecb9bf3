"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SlqSpecError(Exception):
    exit_code = 1


class InvalidInputError(SlqSpecError, ValueError):
    exit_code = 2


class NumericFailureError(SlqSpecError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericFailureError):
    pass


class DegenerateSpectrumError(InvalidInputError):
    pass


class ResourceLimitError(SlqSpecError, MemoryError):
    exit_code = 4
