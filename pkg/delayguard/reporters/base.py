"""
Base reporter class for delayguard.

Defines the RunResult record every command produces and the abstract
Reporter that renders a list of them for the console.
"""

from abc import ABC, abstractmethod
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from delayguard.errors import EXIT_NOT_CERTIFIED, EXIT_NUMERICAL, EXIT_OK


class RunResult(BaseModel):
    """Outcome of one simulate, certify, sweep or selftest run."""

    scenario: str = Field(..., description="Scenario name or path")
    command: str = Field(..., description="Command that produced the result")
    status: str = Field(..., description="One-line status, e.g. 'certified' or 'comparison blow-up at T̃=9.87'")
    exit_code: int = Field(default=0, description="Process exit code the run maps to")
    files: List[str] = Field(default_factory=list, description="Files written")
    messages: List[str] = Field(default_factory=list, description="Warnings and notes")
    verdicts: Dict[str, bool] = Field(default_factory=dict, description="Certificate verdict flags")
    constants: Dict[str, Optional[float]] = Field(default_factory=dict, description="Certificate constants")
    duration: float = Field(default=0.0, description="Wall time in seconds")

    @property
    def success(self) -> bool:
        return self.exit_code == EXIT_OK


class Reporter(ABC):
    """
    Abstract base class for all reporters.

    Provides the shared summary arithmetic for the concrete formats.
    """

    def __init__(self, color: bool = True, verbose: bool = False):
        """
        Initialize the reporter.

        Args:
            color: Whether to use colored output
            verbose: Whether to include messages and constants
        """
        self.color = color
        self.verbose = verbose

    @abstractmethod
    def report(self, results: List[RunResult]) -> str:
        """
        Generate a report from run results.

        Args:
            results: List of run results

        Returns:
            Formatted report string
        """

    def _get_summary(self, results: List[RunResult]) -> Dict[str, int]:
        """
        Count runs per outcome.

        Args:
            results: List of run results

        Returns:
            Summary statistics keyed runs, passed, not_certified, numerical, errors
        """
        summary = {"runs": len(results), "passed": 0, "not_certified": 0, "numerical": 0, "errors": 0}
        for result in results:
            if result.exit_code == EXIT_OK:
                summary["passed"] += 1
            elif result.exit_code == EXIT_NOT_CERTIFIED:
                summary["not_certified"] += 1
            elif result.exit_code == EXIT_NUMERICAL:
                summary["numerical"] += 1
            else:
                summary["errors"] += 1
        return summary
