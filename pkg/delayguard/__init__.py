"""
delayguard: simulation and stability certificates for delay evolution equations.

Covers nonlinear systems u' = A(t)u + G(t, u(t-τ)) + f(t) with:
- Method-of-steps integration of the system and its scalar comparison equation
- Global-existence, boundedness and decay certificates with explicit margins
- Scenario files, parameter sweeps and reproducible CSV/JSON outputs
"""

__version__ = "0.1.0"
__author__ = "delayguard Team"
__email__ = "team@delayguard.dev"

from delayguard.config import Config
from delayguard.core import DelayGuard, RunOverrides
from delayguard.reporters import JSONLReporter, Reporter, RunResult, StylishReporter

__all__ = [
    "DelayGuard",
    "RunOverrides",
    "Config",
    "Reporter",
    "RunResult",
    "StylishReporter",
    "JSONLReporter",
]
