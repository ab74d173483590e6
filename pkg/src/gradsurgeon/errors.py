"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError (and its subclasses)
-> 1, NumericalAbortError -> 2.
"""


class GradsurgeonError(Exception):
    """Base class for all package errors."""


class ValidationError(GradsurgeonError, ValueError):
    """Bad input: config keys, file contents, argument domains."""


class DimensionMismatchError(ValidationError):
    """Two operands whose dimensions must agree do not."""

    def __init__(self, left: int, right: int, op: str = "operation"):
        self.left = left
        self.right = right
        self.op = op
        super().__init__(f"{op}: dimension mismatch ({left} vs {right})")


class NumericalAbortError(GradsurgeonError, ArithmeticError):
    """A loss or intermediate went non-finite; training aborts rather than clamp."""

    def __init__(self, message: str, sample_id: str | None = None):
        self.sample_id = sample_id
        super().__init__(message)
