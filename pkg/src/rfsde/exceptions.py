"""Exception hierarchy shared by every module.

The CLI maps each family to an exit code: configuration and parsing
problems exit with 2, numerical failures with 3, violated preconditions
with 4.
"""


class RfsdeError(Exception):
    """Base class for all package errors."""


class ConfigError(RfsdeError, ValueError):
    """Malformed or inconsistent configuration."""


class NumericalError(RfsdeError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class TubeGapError(NumericalError):
    """The constraint interval collapsed (lower >= upper) at some grid time."""


class PreconditionError(RfsdeError, ValueError):
    """Inputs violate a documented precondition of an operation."""


class SupportError(PreconditionError):
    """The kernel window does not fit inside the observation interval."""


class TransitionPointError(PreconditionError):
    """The trend switches between boundary regimes at the requested index."""
