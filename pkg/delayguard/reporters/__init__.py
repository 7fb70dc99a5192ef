"""
Reporter system for delayguard.

Provides console output formats for run results: stylish (rich tables)
and JSONL.
"""

from delayguard.reporters.base import Reporter, RunResult
from delayguard.reporters.jsonl import JSONLReporter
from delayguard.reporters.stylish import StylishReporter

__all__ = [
    "Reporter",
    "RunResult",
    "StylishReporter",
    "JSONLReporter",
]
