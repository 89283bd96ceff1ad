"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI uses for it:
2 for bad user input, 1 for internal invariant violations.
"""


class LoccostError(Exception):
    """Base class for all loccost errors."""

    exit_code = 1


class UserInputError(LoccostError, ValueError):
    """Invalid parameters, registers or files supplied by the caller."""

    exit_code = 2


class RegisterError(UserInputError):
    """Unknown, duplicate or malformed register label."""


class DimensionMismatch(RegisterError):
    """Operator or state dimensions do not line up."""


class NotUnitaryError(UserInputError):
    """A matrix expected to be unitary is not."""


class ParameterRangeError(UserInputError):
    """An angle, probability or size lies outside its allowed range."""


class MatrixFileError(UserInputError):
    """A JSON matrix/state file could not be parsed."""


class BranchLimitExceeded(UserInputError):
    """Exhaustive enumeration would exceed the configured branch limit."""


class LoccViolation(LoccostError):
    """A step acted on another party's register or on unsent knowledge."""


class InvariantViolation(LoccostError, AssertionError):
    """An internal consistency check failed."""


class ChannelError(InvariantViolation):
    """A constructed channel is not completely positive and trace preserving."""


class ConvergenceError(InvariantViolation):
    """An iterative computation did not converge within its cap."""
