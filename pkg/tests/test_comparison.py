"""
Tests for the scalar comparison equation and its envelopes.
"""

import math

import numpy as np
import pytest

from delayguard.comparison import (
    bound_theorem2,
    envelope_lemma1,
    linear_bound,
    solve_comparison,
    solve_comparison_perturbed,
    zeta,
)
from delayguard.errors import DomainError, InvalidInputError
from delayguard.quadrature import h_tau
from tests.conftest import make_bound


class TestSolveComparison:
    """Test cases for solve_comparison."""

    def test_linear_decay(self):
        """Test h' = -h from h = 1 gives e^{-t}."""
        h = solve_comparison(make_bound(alpha=0.0, w=1.0), 5.0)
        for t in (0.5, 1.0, 3.0, 5.0):
            assert h(t) == pytest.approx(math.exp(-t), rel=1e-7)

    def test_sharp_equality(self):
        """Test h' = h²(t-1), h = 1 on [-1, 0] reaches 13/3 at t = 2."""
        h = solve_comparison(make_bound(gamma=0.0, alpha=1.0, w=1.0), 2.0)
        assert h(1.0) == pytest.approx(2.0, rel=1e-8)
        assert h(2.0) == pytest.approx(13.0 / 3.0, rel=1e-8)

    def test_blowup_reported(self):
        """Test escape past the overflow threshold is reported with its time."""
        h = solve_comparison(make_bound(gamma=0.0, alpha=1.0, w=2.0), 30.0)
        assert h.blown_up
        assert 1.0 < h.blowup_time < 30.0

    def test_perturbed_dominates(self, theorem1_bound):
        """Test adding 1/n to β raises the solution."""
        base = solve_comparison(theorem1_bound, 4.0)
        perturbed = solve_comparison_perturbed(theorem1_bound, 2, 4.0)
        for t in np.linspace(0.1, 4.0, 9):
            assert perturbed(t) > base(t)

    def test_perturbation_vanishes(self, theorem1_bound):
        """Test the perturbed solutions approach h as n grows."""
        base = solve_comparison(theorem1_bound, 3.0)
        close = solve_comparison_perturbed(theorem1_bound, 10**6, 3.0)
        assert close(3.0) - base(3.0) < 1e-5

    def test_invalid_arguments(self, theorem1_bound):
        """Test horizon and n are validated."""
        with pytest.raises(InvalidInputError):
            solve_comparison(theorem1_bound, 0.0)
        with pytest.raises(InvalidInputError):
            solve_comparison_perturbed(theorem1_bound, 0, 1.0)


class TestEnvelopes:
    """Test cases for the closed-form bounds."""

    def test_envelope_dominates_h(self, theorem1_bound):
        """Test the envelope lies above the comparison solution on [τ, T]."""
        h = solve_comparison(theorem1_bound, 10.0)
        start = h_tau(theorem1_bound)
        for t in np.linspace(1.0, 10.0, 37):
            bound = envelope_lemma1(t, start, 0.0, theorem1_bound)
            assert bound is not None
            assert h(t) <= bound * (1.0 + 1e-6)

    def test_envelope_at_tau(self, theorem1_bound):
        """Test the envelope starts at h_τ."""
        assert envelope_lemma1(1.0, 0.5, 0.0, theorem1_bound) == 0.5

    def test_envelope_linear_case(self):
        """Test α ≡ 0 reduces the envelope to h_τν(τ)/ν(t)."""
        bd = make_bound(alpha=0.0, w=1.0)
        start = h_tau(bd)
        assert start == pytest.approx(1.0 / math.e)
        assert envelope_lemma1(3.0, start, 0.0, bd) == pytest.approx(math.exp(-3.0), rel=1e-8)

    def test_envelope_escapes(self):
        """Test a large kernel makes the denominator nonpositive."""
        bd = make_bound(gamma=0.0, alpha=1.0, w=1.0)
        assert envelope_lemma1(10.0, 1.0, 0.0, bd) is None

    def test_envelope_domain(self, theorem1_bound):
        """Test the envelope needs t ≥ τ, ω ≥ 0 and h_τ > 0."""
        with pytest.raises(DomainError):
            envelope_lemma1(0.5, 1.0, 0.0, theorem1_bound)
        with pytest.raises(InvalidInputError):
            envelope_lemma1(2.0, 1.0, -1.0, theorem1_bound)
        with pytest.raises(InvalidInputError):
            envelope_lemma1(2.0, 0.0, 0.0, theorem1_bound)

    def test_zeta(self):
        """Test ζ for constant β and γ = -1."""
        bd = make_bound(alpha=0.0, beta=1.0, w=0.0)
        assert zeta(1.0, 2.0, bd) == 2.0
        expected = (2.0 * math.e + math.exp(3.0) - math.e) / math.exp(3.0)
        assert zeta(3.0, 2.0, bd) == pytest.approx(expected, rel=1e-8)

    def test_zeta_domain(self, theorem1_bound):
        """Test ζ needs t ≥ τ and h(τ) > 0."""
        with pytest.raises(DomainError):
            zeta(0.0, 1.0, theorem1_bound)
        with pytest.raises(InvalidInputError):
            zeta(2.0, 0.0, theorem1_bound)

    def test_bound_theorem2(self):
        """Test the Theorem-2 envelope is qζ."""
        bd = make_bound(alpha=0.0, beta=1.0, w=0.0)
        assert bound_theorem2(3.0, 2.0, 2.0, bd) == pytest.approx(2.0 * zeta(3.0, 2.0, bd))
        with pytest.raises(InvalidInputError):
            bound_theorem2(3.0, 1.0, 2.0, bd)

    def test_linear_bound_matches_solution(self):
        """Test the α ≡ 0 bound equals the comparison solution."""
        bd = make_bound(alpha=0.0, beta=0.5, w=1.0)
        h = solve_comparison(bd, 4.0)
        for t in (0.0, 1.0, 2.5, 4.0):
            assert linear_bound(t, bd) == pytest.approx(h(t), rel=1e-7)
        with pytest.raises(DomainError):
            linear_bound(-1.0, bd)
