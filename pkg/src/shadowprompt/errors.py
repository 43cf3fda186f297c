"""Exception types shared across the package.

The CLI maps ArgumentError/DimensionError/FormatError to exit code 1
(validation) and NumericError to exit code 2 (runtime).
"""


class ShadowPromptError(Exception):
    pass


class DimensionError(ShadowPromptError, ValueError):
    """Array shapes violate an operation's contract."""


class ArgumentError(ShadowPromptError, ValueError):
    """Argument values violate an operation's contract."""


class FormatError(ShadowPromptError, RuntimeError):
    """On-disk data (dataset files, checkpoints) is missing or corrupt."""


class NumericError(ShadowPromptError, RuntimeError):
    """Numerical failure at runtime (NaN loss, non-finite output)."""
