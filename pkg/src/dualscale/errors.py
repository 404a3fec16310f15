"""Exception hierarchy.

Validation errors map to CLI exit status 1, computation errors to 2.
"""


class DualscaleError(Exception):
    exit_code = 2


class ValidationError(DualscaleError, ValueError):
    """Malformed input: bad rows, unknown tokens, violated preconditions."""

    exit_code = 1


class ComputationError(DualscaleError, RuntimeError):
    """A numerical stage could not produce a defined result."""

    exit_code = 2


class AlphaUndefinedError(ComputationError):
    """Krippendorff's alpha has no expected disagreement (all pairable values equal)."""

    def __init__(self, message="alpha undefined: no expected disagreement"):
        super().__init__(message)
