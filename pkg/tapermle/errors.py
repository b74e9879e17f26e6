"""
Exception hierarchy for tapermle.

Every error raised on purpose by the library derives from TaperMleError and
carries the process exit code the CLI uses when the error reaches it.
"""

from enum import IntEnum


class ExitCode(IntEnum):
    """Process exit codes of the command-line surface."""

    OK = 0
    CONFIG = 2
    NUMERICAL = 3
    ACCEPTANCE = 4
    NO_CONVERGENCE = 5


class TaperMleError(Exception):
    """Base class for library errors."""

    exit_code: ExitCode = ExitCode.NUMERICAL


class ConfigError(TaperMleError, ValueError):
    """Unknown, missing or out-of-range configuration keys."""

    exit_code = ExitCode.CONFIG

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"{key}: {reason}")


class DomainError(TaperMleError, ValueError):
    """Argument outside the domain of a numerical function."""

    exit_code = ExitCode.CONFIG


class DesignError(TaperMleError, ValueError):
    """Invalid sampling locations or unreadable dataset."""

    exit_code = ExitCode.CONFIG


class FactorizationError(TaperMleError, ArithmeticError):
    """Cholesky factorization met a non-positive pivot."""

    exit_code = ExitCode.NUMERICAL

    def __init__(self, pivot: int, size: int):
        self.pivot = pivot
        self.size = size
        super().__init__(f"matrix of order {size} is not positive definite (pivot {pivot})")


class DiagnosticError(TaperMleError, ArithmeticError):
    """A numeric diagnostic could not be evaluated."""

    exit_code = ExitCode.NUMERICAL


class ConvergenceError(TaperMleError):
    """Optimization produced no finite objective value."""

    exit_code = ExitCode.NO_CONVERGENCE


class AcceptanceError(TaperMleError):
    """Experiment finished but its acceptance thresholds were not met."""

    exit_code = ExitCode.ACCEPTANCE
