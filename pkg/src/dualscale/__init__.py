"""Validate pointwise position predictions against pointwise and pairwise human judgments."""

__version__ = "0.1.0"

from dualscale.errors import (
    AlphaUndefinedError,
    ComputationError,
    DualscaleError,
    ValidationError,
)

__all__ = [
    "AlphaUndefinedError",
    "ComputationError",
    "DualscaleError",
    "ValidationError",
    "__version__",
]
