"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class FreeCircError(Exception):
    """Base class for package errors."""


class ValidationError(FreeCircError, ValueError):
    """Bad input: wrong grid, misaligned endpoint, violated precondition."""


class NumericalError(FreeCircError, ArithmeticError):
    """A numerical procedure failed."""


class SingularityError(NumericalError):
    """A step function could not be inverted (a cell is numerically zero)."""


class ConvergenceError(NumericalError):
    """An iteration exceeded its budget without meeting the tolerance."""
