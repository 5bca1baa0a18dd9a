"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes, so every failure mode that a
user can trigger should surface as one of these classes.
"""


class ProbRobustError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InvalidInputError(ProbRobustError, ValueError):
    """Rejected argument: wrong dimensions, out-of-range parameters, bad files."""

    exit_code = 1


class ConfigError(InvalidInputError):
    """A configuration document failed validation."""

    exit_code = 1


class NumericFaultError(ProbRobustError, ArithmeticError):
    """A non-finite value appeared in logits, gradients or losses."""

    exit_code = 2


class RareEventError(ProbRobustError, RuntimeError):
    """The event of interest is too rare for the estimator configuration."""

    exit_code = 3
