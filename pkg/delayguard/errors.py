"""
Exception hierarchy for delayguard.

Every failure the toolkit reports derives from DelayGuardError; the CLI maps
the subclasses to exit codes.
"""

from contextlib import contextmanager
from typing import Any, Iterator, List, Optional, Sequence, Tuple


class DelayGuardError(Exception):
    """Base class for all delayguard errors."""


class InvalidInputError(DelayGuardError, ValueError):
    """Raised when an argument or a scenario field violates its contract."""

    def __init__(self, message: str, field_paths: Sequence[str] = ()):
        """
        Initialize the error.

        Args:
            message: Human-readable description
            field_paths: Offending field paths, if known
        """
        super().__init__(message)
        self.field_paths: List[str] = list(field_paths)


class DomainError(DelayGuardError, ValueError):
    """Raised when a time argument lies outside the operation's domain."""


class InvalidCertificateError(InvalidInputError):
    """Raised when a candidate certificate function is itself invalid (e.g. μ ≤ 0)."""


class CertificateInapplicableError(DelayGuardError):
    """Raised when a theorem's route cannot be applied to the given bound data."""

    def __init__(self, message: str, suggestion: Optional[str] = None):
        super().__init__(message)
        self.suggestion = suggestion


class NumericalFailure(DelayGuardError):
    """Base class for failures of the numerical machinery."""


class AccuracyError(NumericalFailure):
    """Raised when adaptive quadrature exhausts its subdivisions without converging."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class StepUnderflowError(NumericalFailure):
    """Raised when the step size collapses; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: Any = None):
        super().__init__(message)
        self.trajectory = trajectory


@contextmanager
def arithmetic_guard(what: str) -> Iterator[None]:
    """Re-raise float overflow and division by zero inside the block as NumericalFailure."""
    try:
        yield
    except ArithmeticError as e:
        raise NumericalFailure(f"{what}: {type(e).__name__}: {e}") from e


class ExpressionSyntaxError(InvalidInputError):
    """Raised by the expression parser with a 1-based line/column location."""

    def __init__(self, message: str, line: int, column: int, source: str = ""):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column
        self.source = source


class ScenarioError(InvalidInputError):
    """Raised when a scenario document fails validation; lists every issue."""

    def __init__(self, issues: Sequence[Tuple[str, str]]):
        self.issues: List[Tuple[str, str]] = list(issues)
        lines = [f"{path or '<root>'}: {message}" for path, message in self.issues]
        super().__init__(
            "invalid scenario:\n  " + "\n  ".join(lines),
            field_paths=[path for path, _ in self.issues],
        )


EXIT_OK = 0
EXIT_NOT_CERTIFIED = 2
EXIT_NUMERICAL = 3
EXIT_INVALID = 4


def exit_code_for(error: BaseException) -> int:
    """Exit code of a failed run: 3 for numerical failures (arithmetic errors included), 4 for everything else."""
    if isinstance(error, (NumericalFailure, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_INVALID
