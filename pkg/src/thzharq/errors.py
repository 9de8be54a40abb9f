"""Exception hierarchy shared by the numerical modules and the CLI."""


class ThzHarqError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(ThzHarqError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class PoleError(ThzHarqError, ValueError):
    """Argument sits on a pole of a special function."""

    exit_code = 2


class ContourPlacementError(ThzHarqError, ValueError):
    """A Mellin-Barnes abscissa violates its strip constraint."""

    exit_code = 2


class ConvergenceError(ThzHarqError, ArithmeticError):
    """A quadrature or series failed to meet its tolerance."""

    exit_code = 3


class InfeasibleError(ThzHarqError):
    """The rate-selection problem has an empty feasible set."""

    exit_code = 4
