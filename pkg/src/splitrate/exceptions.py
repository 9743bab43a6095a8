"""Exception hierarchy.

``UsageError`` covers bad arguments at call sites (dimension mismatch,
parameters out of range), ``ConfigError`` covers invalid experiment
configurations and iteration plans, ``NumericalError`` covers failures of
inner numerical procedures.
"""


class SplitRateError(Exception):
    """Base class for all package errors."""


class UsageError(SplitRateError, ValueError):
    """Invalid argument passed to a public function."""


class ConfigError(SplitRateError, ValueError):
    """Invalid experiment configuration or iteration plan."""


class NumericalError(SplitRateError, ArithmeticError):
    """A numerical subroutine failed; ``residual`` carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateSampleError(NumericalError):
    """Every sample fell inside the target set, so no exponent can be fitted."""
