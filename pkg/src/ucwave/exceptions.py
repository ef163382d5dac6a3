"""Exception hierarchy shared across the package.

Configuration problems (bad parameters, violated preconditions) map to CLI
exit code 2; numerical failures during a run map to exit code 3.
"""


class UcwaveError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(UcwaveError):
    """Invalid configuration or violated precondition."""

    exit_code = 2


class UsageError(ConfigurationError):
    """An operation was called in a setting where it is not defined."""


class NumericalError(UcwaveError):
    """A numerical stage failed (assembly, factorization, solve, eigen)."""

    exit_code = 3


class AssemblyError(NumericalError):
    pass


class FactorizationError(NumericalError):
    pass


class SolverQualityError(NumericalError):
    pass


class EigenError(NumericalError):
    pass
