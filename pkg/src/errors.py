"""
Exception hierarchy for the DIMSUM toolkit.

Every error carries an ``exit_code`` so ``main.py`` can map it straight to a
process status: 2 for parameter / regime / input problems, 3 for numeric
failures. Input errors subclass ``ValueError`` so callers that only know the
standard library still catch them.
"""


class DimsumError(Exception):
    exit_code = 2


# -----------------------------------------------------------------------------
# PARAMETER / REGIME ERRORS (exit 2)
# -----------------------------------------------------------------------------
class ParameterError(DimsumError, ValueError):
    """Invalid user-supplied parameter (e.g. L > n, negative gamma)."""


class DegenerateInputError(ParameterError):
    """All-zero matrix, zero-norm truth matrix and similar empty cases."""


class RegimeError(ParameterError):
    """Input outside the regime a verification suite requires (e.g. negative entries)."""


class ContractError(ParameterError):
    """A function received an object violating its documented contract."""


class PreconditionError(ParameterError):
    """A statistical precondition failed against the oracle (e.g. cosine below epsilon)."""


class CapacityError(ParameterError):
    """Dense n x n work requested above the configured guard."""


class MatrixFormatError(ParameterError):
    """Problem in a matrix file. ``line_number`` is 1-based, None when not line-specific."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ParseError(MatrixFormatError):
    pass


class BoundsError(MatrixFormatError):
    pass


class DuplicateEntryError(MatrixFormatError):
    pass


# -----------------------------------------------------------------------------
# RUNTIME ERRORS
# -----------------------------------------------------------------------------
class NumericError(DimsumError, ArithmeticError):
    """Iterative solver failed to converge. Keeps the last iterate for inspection."""

    exit_code = 3

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class JobError(DimsumError, RuntimeError):
    """A mapper or reducer raised; the message names the row or key."""

    exit_code = 3
