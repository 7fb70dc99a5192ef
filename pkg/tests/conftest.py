"""
Shared fixtures for the delayguard test suite.
"""

import copy
import json
import math

import pytest

from delayguard.core import SAMPLES_DIR
from delayguard.model import BoundData, TimeScalarFn


def make_bound(gamma=-1.0, alpha=0.1, beta=0.0, p=2.0, tau=1.0, w=0.1) -> BoundData:
    """BoundData from constants or callables."""

    def wrap(value, label):
        if isinstance(value, TimeScalarFn):
            return value
        if callable(value):
            return TimeScalarFn(value, label=label)
        return TimeScalarFn.constant(value)

    return BoundData(gamma=wrap(gamma, "gamma"), alpha=wrap(alpha, "alpha"), beta=wrap(beta, "beta"),
                     p=p, tau=tau, w=wrap(w, "w"))


def load_sample(name: str) -> dict:
    return json.loads((SAMPLES_DIR / name).read_text(encoding="utf-8"))


@pytest.fixture
def theorem1_bound() -> BoundData:
    """γ = -1, α = 0.1, β = 0, p = 2, τ = 1, w = 0.1."""
    return make_bound()


@pytest.fixture
def theorem1_scenario() -> dict:
    return load_sample("theorem1_certified.json")


@pytest.fixture
def linear_scenario() -> dict:
    return load_sample("linear_decay.json")


@pytest.fixture
def scenario_factory():
    """Copy of a bundled sample with top-level keys replaced."""

    def build(name: str, **changes) -> dict:
        data = copy.deepcopy(load_sample(name))
        data.update(changes)
        return data

    return build


# h_τ for the theorem1 bound data: w(0)/ν(τ) + αw²(1 - e^{-1}).
THEOREM1_H_TAU = 0.1 / math.e + 0.001 * (1.0 - math.exp(-1.0))
