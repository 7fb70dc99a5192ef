"""
Stylish reporter for delayguard.

Renders run results as rich tables: one status line per run, and for
certificate runs the verdicts and constants.
"""

from typing import List

from rich.console import Console
from rich.table import Table
from rich.text import Text

from delayguard.errors import EXIT_NOT_CERTIFIED, EXIT_OK
from delayguard.reporters.base import Reporter, RunResult


class StylishReporter(Reporter):
    """
    Stylish reporter with colored tables.

    The rendered text is captured from a rich Console so the CLI can print it
    like any other report string.
    """

    def __init__(self, color: bool = True, verbose: bool = False, width: int = 110):
        """
        Initialize the stylish reporter.

        Args:
            color: Whether to use colored output
            verbose: Whether to list constants and messages
            width: Console width used for rendering
        """
        super().__init__(color, verbose)
        self.console = Console(force_terminal=color, no_color=not color, width=width, highlight=False)

    def report(self, results: List[RunResult]) -> str:
        """
        Generate a stylish report from run results.

        Args:
            results: List of run results

        Returns:
            Formatted report string
        """
        if not results:
            return "No runs.\n"

        with self.console.capture() as capture:
            self.console.print(self._runs_table(results))
            for result in results:
                if result.verdicts:
                    self.console.print(self._certificate_table(result))
                if self.verbose:
                    for message in result.messages:
                        self.console.print(Text(f"  • {message}", style="dim"))
            self.console.print(self._format_summary(results))
        return capture.get()

    def _style(self, result: RunResult) -> str:
        if result.exit_code == EXIT_OK:
            return "green"
        if result.exit_code == EXIT_NOT_CERTIFIED:
            return "yellow"
        return "red"

    def _runs_table(self, results: List[RunResult]) -> Table:
        table = Table(title="delayguard runs")
        table.add_column("Scenario", style="cyan")
        table.add_column("Command")
        table.add_column("Status")
        table.add_column("Exit", justify="right")
        table.add_column("Time", justify="right", style="dim")
        for result in results:
            style = self._style(result)
            table.add_row(
                result.scenario,
                result.command,
                Text(result.status, style=style),
                Text(str(result.exit_code), style=style),
                f"{result.duration:.2f}s",
            )
        return table

    def _certificate_table(self, result: RunResult) -> Table:
        table = Table(title=f"{result.scenario}: certificate", show_header=False)
        table.add_column("Key", style="bold")
        table.add_column("Value")
        for verdict, value in result.verdicts.items():
            table.add_row(verdict, Text("yes" if value else "no", style="green" if value else "red"))
        if self.verbose:
            for name, value in result.constants.items():
                table.add_row(name, "-" if value is None else f"{value:.6g}")
        return table

    def _format_summary(self, results: List[RunResult]) -> Text:
        summary = self._get_summary(results)
        text = Text(f"Runs: {summary['runs']} ({summary['passed']} passed)")
        if summary["not_certified"]:
            text.append(f", not certified: {summary['not_certified']}", style="yellow")
        if summary["numerical"]:
            text.append(f", numerical failures: {summary['numerical']}", style="red")
        if summary["errors"]:
            text.append(f", errors: {summary['errors']}", style="red")
        return text
