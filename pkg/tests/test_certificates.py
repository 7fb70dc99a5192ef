"""
Tests for the stability certificates.

Covers the global-existence conditions, the derived bounds, the
inapplicable routes, the μ certificate and the long-term classification.
"""

import math

import pytest

from delayguard.certificates import (
    CERTIFIED,
    HORIZON_LIMITED,
    NOT_ESTABLISHED,
    Certificate,
    check_corollary1,
    check_mu_certificate,
    check_theorem1,
    check_theorem2,
    classify_longterm,
)
from delayguard.comparison import solve_comparison
from delayguard.errors import CertificateInapplicableError, InvalidCertificateError, InvalidInputError, NumericalFailure
from delayguard.model import TimeScalarFn
from delayguard.quadrature import TailModel
from tests.conftest import THEOREM1_H_TAU, make_bound

EXP_TAIL = TailModel(kind="exponential_bound", c=3.4e-5, lam=1.0, gamma_tail="negative", gamma_rate=1.0)

# Threshold [(p-1)I]^{-1/(p-1)} - h_τν(τ) with I ≈ 0.1e.
THEOREM1_THRESHOLD = 1.0 / (0.1 * math.e) - THEOREM1_H_TAU * math.e


def _decay_bound():
    beta = TimeScalarFn(lambda t: 1.0 / (1.0 + t), label="1/(1+t)")
    return make_bound(alpha=0.0, beta=beta, w=0.5)


class TestTheorem1:
    """Test cases for check_theorem1."""

    def test_certified(self, theorem1_bound):
        """Test small α is certified with all three verdicts."""
        cert = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        assert cert.theorem == "T1"
        assert cert.certified
        assert cert.global_existence and cert.bounded and cert.decays_to_zero
        assert not cert.horizon_limited
        assert cert.constants["h_tau"] == pytest.approx(THEOREM1_H_TAU, rel=1e-8)
        assert cert.constants["omega"] == 0.0
        assert cert.provenance["global_existence"] == CERTIFIED

    def test_margin(self, theorem1_bound):
        """Test the reported slack is threshold - ω."""
        cert = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        margin = next(m for m in cert.margins if m.name == "omega_below_threshold")
        assert margin.rhs == pytest.approx(THEOREM1_THRESHOLD, rel=1e-4)
        assert margin.slack == pytest.approx(THEOREM1_THRESHOLD, rel=1e-4)
        assert margin.satisfied

    def test_constants(self, theorem1_bound):
        """Test C and the uniform bound C·e^M."""
        cert = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        assert cert.constants["M"] == pytest.approx(0.0, abs=1e-12)
        assert cert.constants["C"] > 0.0
        assert cert.constants["bound"] == pytest.approx(cert.constants["C"] * math.exp(cert.constants["M"]))

    def test_envelope_dominates_h(self, theorem1_bound):
        """Test the certificate's envelope bounds h on [τ, T]."""
        cert = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        h = solve_comparison(theorem1_bound, 10.0)
        assert cert.bound_at(0.5) is None
        for t in (1.0, 2.0, 5.0, 10.0):
            assert h(t) <= cert.bound_at(t) * (1.0 + 1e-6)

    def test_large_alpha_fails(self):
        """Test α = 50 violates the condition."""
        cert = check_theorem1(make_bound(alpha=50.0), 10.0, EXP_TAIL)
        assert not cert.certified
        assert not cert.bounded and not cert.decays_to_zero
        assert cert.provenance["global_existence"] == NOT_ESTABLISHED
        assert cert.constants["C"] is None
        assert cert.bound_at(2.0) is None
        assert any(not m.satisfied for m in cert.margins)

    def test_truncated_tail_is_horizon_limited(self, theorem1_bound):
        """Test a truncated kernel tail limits the verdict to the horizon."""
        cert = check_theorem1(theorem1_bound, 10.0, TailModel())
        assert cert.certified
        assert cert.horizon_limited
        assert not cert.decays_to_zero
        assert cert.provenance["global_existence"] == HORIZON_LIMITED

    def test_alpha_zero_with_forcing_is_inapplicable(self):
        """Test α ≡ 0 with β > 0 points to the linear bound."""
        with pytest.raises(CertificateInapplicableError) as exc_info:
            check_theorem1(make_bound(alpha=0.0, beta=1.0), 5.0)
        assert "linear" in exc_info.value.suggestion

    def test_alpha_zero_unforced(self):
        """Test α ≡ β ≡ 0 is certified for any data."""
        cert = check_theorem1(make_bound(alpha=0.0, w=100.0), 5.0)
        assert cert.certified
        assert any("α ≡ 0" in note for note in cert.notes)

    def test_forced_condition(self):
        """Test a positive β enters through ω."""
        bd = make_bound(alpha=0.01, beta=TimeScalarFn(lambda t: 0.01 * math.exp(-3.0 * t)), w=0.1)
        cert = check_theorem1(bd, 8.0, TailModel(gamma_tail="negative", gamma_rate=1.0))
        assert cert.constants["omega"] > 0.0
        assert cert.certified

    def test_contradicted_tail(self, theorem1_bound):
        """Test a tail assertion the data violates is rejected."""
        with pytest.raises(InvalidInputError):
            check_theorem1(theorem1_bound, 10.0, TailModel(gamma_tail="negative", gamma_rate=5.0))


    def test_overflowing_kernel_is_numerical_failure(self):
        """Test a kernel integrand past double range raises NumericalFailure."""
        with pytest.raises(NumericalFailure):
            check_theorem1(make_bound(gamma=5.0, alpha=1e-3), 200.0)

    def test_growing_gamma_integral_is_not_bounded(self):
        """Test ∫γ still rising at the horizon leaves boundedness unestablished."""
        cert = check_theorem1(make_bound(gamma=0.1, alpha=1e-4), 20.0)
        assert cert.global_existence
        assert not cert.bounded
        assert cert.constants["M"] == pytest.approx(2.0, rel=1e-8)
        assert cert.constants["bound"] is None
        assert cert.provenance["M"] == NOT_ESTABLISHED
        assert cert.provenance["bounded"] == NOT_ESTABLISHED
        assert any("still increasing" in note for note in cert.notes)

    def test_bernoulli_closed_form(self, theorem1_bound):
        """Test the envelope equals the Bernoulli solution (1/z₀ - K(t))⁻¹e^{-t} on [τ, τ+10]."""
        cert = check_theorem1(theorem1_bound, 11.0, EXP_TAIL)
        z0 = THEOREM1_H_TAU * math.e
        for t in [1.0 + 0.5 * k for k in range(21)]:
            kernel = 0.1 * math.e * (1.0 - math.exp(1.0 - t))
            expected = math.exp(-t) / (1.0 / z0 - kernel)
            assert cert.bound_at(t) == pytest.approx(expected, rel=1e-8)


class TestCorollary1:
    """Test cases for check_corollary1."""

    def test_unforced(self, theorem1_bound):
        """Test the unforced case carries the stability notes."""
        cert = check_corollary1(theorem1_bound, 10.0, EXP_TAIL)
        assert cert.theorem == "C1"
        assert cert.certified
        assert "stability: lyapunov" in cert.notes
        assert "stability: asymptotic" in cert.notes

    def test_agrees_with_theorem1(self, theorem1_bound):
        """Test the unforced check reproduces the Theorem-1 envelope and constants."""
        t1 = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        c1 = check_corollary1(theorem1_bound, 10.0, EXP_TAIL)
        assert c1.constants["C"] == pytest.approx(t1.constants["C"], rel=1e-10)
        for t in (1.0, 2.5, 6.0, 10.0):
            assert c1.bound_at(t) == pytest.approx(t1.bound_at(t), rel=1e-10)

    def test_requires_zero_beta(self):
        """Test β ≢ 0 is rejected."""
        with pytest.raises(InvalidInputError):
            check_corollary1(make_bound(beta=0.1), 10.0)


class TestTheorem2:
    """Test cases for check_theorem2."""

    def test_decay_by_ratio(self):
        """Test decay through β/γ → 0 without boundedness."""
        tail = TailModel(gamma_tail="negative", gamma_rate=1.0, beta_gamma_ratio_vanishes=True,
                         condition_holds_beyond=True)
        cert = check_theorem2(_decay_bound(), 2.0, 10.0, tail)
        assert cert.theorem == "T2"
        assert cert.global_existence
        assert cert.decays_to_zero
        assert not cert.bounded
        assert not cert.horizon_limited
        assert cert.provenance["decay_branch"] == "β/γ → 0"

    def test_bounded_with_beta_nu_tail(self):
        """Test a certified ∫βν tail gives boundedness and a uniform bound."""
        tail = TailModel(gamma_tail="negative", gamma_rate=1.0, beta_nu_tail=1e9, condition_holds_beyond=True)
        cert = check_theorem2(_decay_bound(), 2.0, 10.0, tail)
        assert cert.bounded
        assert cert.decays_to_zero
        assert cert.constants["bound"] is not None
        assert cert.provenance["decay_branch"] == "integrable βν"

    def test_envelope_is_q_zeta(self):
        """Test the envelope dominates h."""
        bd = _decay_bound()
        cert = check_theorem2(bd, 2.0, 10.0)
        h = solve_comparison(bd, 10.0)
        for t in (1.0, 4.0, 10.0):
            assert h(t) <= cert.bound_at(t)
        assert cert.horizon_limited

    def test_condition_fails(self):
        """Test a large α against small β violates the pointwise condition."""
        bd = make_bound(alpha=100.0, beta=TimeScalarFn(lambda t: 1e-3 / (1.0 + t)), w=1.0)
        cert = check_theorem2(bd, 2.0, 10.0)
        assert not cert.certified
        worst = next(m for m in cert.margins if m.name == "pointwise_condition")
        assert worst.slack < 0
        assert worst.location is not None

    def test_unforced_and_alpha_free(self):
        """Test α ≡ β ≡ 0 is handled with the envelope qh_τν(τ)/ν(t)."""
        tail = TailModel(gamma_tail="negative", gamma_rate=1.0)
        cert = check_theorem2(make_bound(alpha=0.0, w=0.5), 2.0, 10.0, tail)
        assert cert.global_existence and cert.bounded and cert.decays_to_zero
        assert not cert.horizon_limited
        assert cert.bound_at(3.0) == pytest.approx(math.exp(-3.0), rel=1e-8)
        assert cert.constants["bound"] == pytest.approx(1.0, rel=1e-8)
        assert cert.provenance["decay_branch"] == "integrable βν"
        assert cert.provenance["bounded"] == CERTIFIED
        assert not any(m.name == "pointwise_condition" for m in cert.margins)

    @pytest.mark.slow
    def test_long_horizon_past_double_range(self):
        """Test ν(t) beyond e^709 keeps the envelope finite and marks ∫βν unrepresentable."""
        bd = make_bound(gamma=-1.0, alpha=1e-6, beta=1.0)
        tail = TailModel(gamma_tail="negative", gamma_rate=1.0)
        cert = check_theorem2(bd, 2.0, 800.0, tail, grid_step=0.5)
        assert cert.global_existence
        assert cert.bound_at(800.0) == pytest.approx(2.0, rel=1e-6)
        assert cert.constants["beta_nu_integral"] == math.inf
        assert not cert.bounded

    def test_unforced_is_inapplicable(self, theorem1_bound):
        """Test β ≡ 0 with α ≢ 0 cannot be handled."""
        with pytest.raises(CertificateInapplicableError):
            check_theorem2(theorem1_bound, 2.0, 10.0)

    def test_q_must_exceed_one(self):
        """Test q ≤ 1 is rejected."""
        with pytest.raises(InvalidInputError):
            check_theorem2(_decay_bound(), 1.0, 10.0)


class TestMuCertificate:
    """Test cases for check_mu_certificate."""

    def test_constant_mu(self):
        """Test μ ≡ 1 certifies ‖u‖ ≤ 1 for a contracting linear problem."""
        bd = make_bound(gamma=-2.0, alpha=0.0, w=0.5)
        one, zero = TimeScalarFn.constant(1.0), TimeScalarFn.constant(0.0)
        cert = check_mu_certificate(one, zero, bd, 5.0)
        assert cert.certified and cert.bounded
        assert cert.horizon_limited
        assert not cert.decays_to_zero
        assert cert.constants["bound"] == 1.0
        assert cert.bound_at(3.0) == 1.0

    def test_finite_difference_derivative(self):
        """Test μ̇ is approximated when omitted."""
        bd = make_bound(gamma=-2.0, alpha=0.0, w=0.5)
        mu = TimeScalarFn(lambda t: math.exp(t), label="e^t")
        cert = check_mu_certificate(mu, None, bd, 3.0)
        assert cert.certified

    def test_history_above_inverse_mu(self):
        """Test w ≤ 1/μ on [-τ, 0] is required."""
        bd = make_bound(gamma=-2.0, alpha=0.0, w=2.0)
        cert = check_mu_certificate(TimeScalarFn.constant(1.0), TimeScalarFn.constant(0.0), bd, 5.0)
        assert not cert.certified
        history = next(m for m in cert.margins if m.name == "history_below_inverse_mu")
        assert not history.satisfied

    def test_nonpositive_mu(self):
        """Test μ ≤ 0 is rejected."""
        bd = make_bound(gamma=-2.0, alpha=0.0, w=0.5)
        with pytest.raises(InvalidCertificateError):
            check_mu_certificate(TimeScalarFn(lambda t: 1.0 - t), None, bd, 5.0)

    def test_explicit_grid(self):
        """Test an explicit time grid must lie in [0, horizon]."""
        bd = make_bound(gamma=-2.0, alpha=0.0, w=0.5)
        one = TimeScalarFn.constant(1.0)
        assert check_mu_certificate(one, None, bd, 5.0, grid=[0.0, 2.5, 5.0]).certified
        with pytest.raises(InvalidInputError):
            check_mu_certificate(one, None, bd, 5.0, grid=[0.0, 6.0])


class TestCertificateRecord:
    """Test cases for the Certificate invariants."""

    def test_bounded_requires_existence(self):
        """Test bounded without global existence is rejected."""
        with pytest.raises(ValueError):
            Certificate(theorem="T1", bounded=True, horizon=1.0)

    def test_frozen(self, theorem1_bound):
        """Test certificates are immutable."""
        cert = check_theorem1(theorem1_bound, 10.0, EXP_TAIL)
        with pytest.raises(ValueError):
            cert.bounded = False

    def test_dump_omits_envelope(self, theorem1_bound):
        """Test the envelope callable is not serialized."""
        data = check_theorem1(theorem1_bound, 10.0, EXP_TAIL).model_dump()
        assert "envelope" not in data
        assert data["margins"][0]["name"] == "h_tau_positive"


class TestLongTerm:
    """Test cases for classify_longterm."""

    def test_decaying_gamma(self):
        """Test γ = -1 with a negative tail assertion."""
        report = classify_longterm(TimeScalarFn.constant(-1.0), TimeScalarFn.constant(0.0), 10.0,
                                   TailModel(gamma_tail="negative", gamma_rate=1.0))
        assert report.M == pytest.approx(0.0, abs=1e-12)
        assert report.M_provenance == CERTIFIED
        assert report.gamma_diverges
        assert report.beta_nu_integral == 0.0
        assert not report.beta_nu_finite

    def test_ratio_trend(self):
        """Test |β/γ| decreasing with the β/γ → 0 assertion."""
        beta = TimeScalarFn(lambda t: 1.0 / (1.0 + t))
        report = classify_longterm(TimeScalarFn.constant(-1.0), beta, 10.0,
                                   TailModel(gamma_tail="negative", gamma_rate=1.0, beta_gamma_ratio_vanishes=True))
        assert report.ratio_decreasing
        assert report.ratio_limit_zero
        assert report.ratio_provenance == CERTIFIED

    def test_unasserted(self):
        """Test nothing is claimed without tail assertions."""
        report = classify_longterm(TimeScalarFn(math.cos), TimeScalarFn.constant(0.0), 10.0)
        assert report.M == pytest.approx(1.0, abs=1e-8)
        assert report.M_provenance == HORIZON_LIMITED
        assert not report.gamma_diverges
        assert report.gamma_provenance == NOT_ESTABLISHED
