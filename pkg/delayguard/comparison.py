"""
Scalar comparison equation and its closed-form envelopes.

The comparison solution h of

    h'(t) = γ(t)h(t) + α(t)h^p(t-τ) + β(t),   h = w on [-τ, 0]

dominates the norm of every solution of the vector system. This module
solves it by the method of steps and evaluates the explicit upper bounds
for h used by the certificates.
"""

import logging
import math
from typing import Optional

import numpy as np

from delayguard.errors import DomainError, InvalidInputError
from delayguard.model import BoundData
from delayguard.quadrature import DEFAULT_SETTINGS, QuadratureSettings, bound_quadrature, checked_exp, scaled_exp
from delayguard.steps import ScalarTrajectory, StepControl, method_of_steps

logger = logging.getLogger(__name__)

DEFAULT_CONTROL = StepControl()


def solve_comparison(
    bd: BoundData,
    horizon: float,
    ctrl: StepControl = DEFAULT_CONTROL,
    forcing_offset: float = 0.0,
) -> ScalarTrajectory:
    """
    Solve the comparison equation on [0, horizon].

    Args:
        bd: Bound data (γ, α, β, p, τ, w)
        horizon: Final time, > 0
        ctrl: Step control
        forcing_offset: Constant added to β (the 1/n perturbation)

    Returns:
        ScalarTrajectory; ``blown_up``/``blowup_time`` report an escape past 1e150

    Raises:
        StepUnderflowError: If the step size collapses
    """
    if not horizon > 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}", ["horizon"])
    p = bd.p

    def rhs(t: float, y: np.ndarray, lagged: np.ndarray) -> np.ndarray:
        past = max(float(lagged[0]), 0.0)
        return np.array([bd.gamma(t) * y[0] + bd.alpha(t) * past**p + bd.beta(t) + forcing_offset])

    def history(t: float) -> np.ndarray:
        return np.array([bd.w(t)])

    traj = method_of_steps(rhs, history, 1, bd.tau, horizon, ctrl, ScalarTrajectory, clamp_nonnegative=True)
    if traj.blown_up:
        logger.info("comparison solution blew up at T̃=%g", traj.blowup_time)
    return traj


def solve_comparison_perturbed(
    bd: BoundData,
    n: int,
    horizon: float,
    ctrl: StepControl = DEFAULT_CONTROL,
) -> ScalarTrajectory:
    """Comparison solution with β replaced by β + 1/n."""
    if n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n}", ["n"])
    return solve_comparison(bd, horizon, ctrl, forcing_offset=1.0 / n)


def envelope_lemma1(
    t: float,
    h_tau: float,
    omega: float,
    bd: BoundData,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
) -> Optional[float]:
    """
    Closed-form envelope of h on [τ, ∞).

    ([h_τν(τ) + ω]^{1-p} - (p-1)K(t))^{-1/(p-1)} - ω, divided by ν(t), where K is
    the kernel integral.

    Returns:
        The envelope value, or None once the bracketed denominator is ≤ 0
    """
    if t < bd.tau:
        raise DomainError(f"envelope is defined for t ≥ τ={bd.tau}, got t={t}")
    if omega < 0 or not h_tau > 0:
        raise InvalidInputError("envelope needs ω ≥ 0 and h_τ > 0")
    bq = bound_quadrature(bd, settings)
    p = bd.p
    start = h_tau * bq.nu(bd.tau) + omega
    denominator = checked_exp((1.0 - p) * math.log(start), "envelope start") - (p - 1.0) * bq.kernel_integral(t)
    if denominator <= 0.0:
        return None
    if t == bd.tau:
        return h_tau
    lifted = checked_exp(-math.log(denominator) / (p - 1.0), "envelope")
    return scaled_exp(lifted - omega, -bq.log_nu(t), "envelope")


def zeta(t: float, h_at_tau: float, bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """ζ(t) = [h(τ)ν(τ) + ∫_τ^t βν] / ν(t)."""
    if t < bd.tau:
        raise DomainError(f"ζ is defined for t ≥ τ={bd.tau}, got t={t}")
    if not h_at_tau > 0:
        raise InvalidInputError(f"h(τ) must be positive, got {h_at_tau}")
    if t == bd.tau:
        return h_at_tau
    return bound_quadrature(bd, settings).discounted(bd.tau, h_at_tau)(t)


def bound_theorem2(
    t: float,
    q: float,
    h_at_tau: float,
    bd: BoundData,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
) -> float:
    """q·ζ(t) for q > 1."""
    if not q > 1:
        raise InvalidInputError(f"q must exceed 1, got {q}", ["certificate.q"])
    return q * zeta(t, h_at_tau, bd, settings)


def linear_bound(t: float, bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """
    Exact bound (w(0) + ∫₀ᵗ βν)/ν(t) for the case α ≡ 0.

    Variation of constants on the norm inequality with the delayed term absent.
    """
    if t < 0:
        raise DomainError(f"linear bound is defined for t ≥ 0, got t={t}")
    return bound_quadrature(bd, settings).discounted(0.0, bd.w(0.0))(t)
