"""Exception types shared across the package.

The CLI maps each class to a process exit code, so every failure raised from
library code should be one of these.
"""


class ShapeflowError(Exception):
    exit_code = 1
    category = "error"


class ValidationError(ShapeflowError, ValueError):
    """Bad input: wrong dimensions, unknown labels, malformed records."""

    exit_code = 2
    category = "validation"


class NumericRangeError(ShapeflowError, ArithmeticError):
    """A computation produced a non-finite value."""

    exit_code = 3
    category = "numeric"


class FormatError(ShapeflowError, OSError):
    """A file could not be read or written, or its contents are malformed."""

    exit_code = 4
    category = "io"
