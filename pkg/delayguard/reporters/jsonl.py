"""
JSONL reporter for delayguard.

Provides JSON Lines output suitable for machine processing: a summary line
followed by one line per run.
"""

import json
from typing import List

from delayguard.reporters.base import Reporter, RunResult


class JSONLReporter(Reporter):
    """JSONL reporter for machine-readable output."""

    def __init__(self, color: bool = False, verbose: bool = False):
        super().__init__(color=False, verbose=verbose)

    def report(self, results: List[RunResult]) -> str:
        """
        Generate a JSONL report from run results.

        Args:
            results: List of run results

        Returns:
            JSONL formatted report string
        """
        if not results:
            return ""

        summary = self._get_summary(results)
        lines = [json.dumps({"type": "summary", **summary})]
        for result in results:
            exclude = None if self.verbose else {"duration", "constants", "messages"}
            line = {"type": "run", **result.model_dump(exclude=exclude)}
            lines.append(json.dumps(line, ensure_ascii=False, default=str))
        return "\n".join(lines)
