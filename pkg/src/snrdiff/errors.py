"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific type that applies.
"""


class ConfigError(ValueError):
    """A schedule, mixture, or sampler specification is invalid."""


class NumericalError(RuntimeError):
    """A computation produced non-finite or otherwise unusable values."""
