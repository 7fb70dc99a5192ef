"""
The vector delay system u' = A(t)u + G(t, u(t-τ)) + f(t) and its norm curve.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from delayguard.errors import InvalidInputError
from delayguard.model import BoundData, ProblemSpec
from delayguard.steps import StepControl, VectorTrajectory, method_of_steps

logger = logging.getLogger(__name__)

# Points where g(t) is at most this are left out of the residual assertion.
ZERO_NORM = 1e-10


def solve_system(ps: ProblemSpec, ctrl: StepControl = StepControl(), validate: bool = True) -> VectorTrajectory:
    """
    Integrate the vector system on [0, ps.horizon] by the method of steps.

    Args:
        ps: Problem instance
        ctrl: Step control
        validate: Run the sampled invariant checks of ``ps`` first

    Returns:
        VectorTrajectory

    Raises:
        InvalidInputError: If ``ps`` fails its sampled invariants
        StepUnderflowError: If the step size collapses
    """
    if validate:
        issues = ps.sample_violations()
        if issues:
            raise InvalidInputError(
                "; ".join(f"{path}: {message}" for path, message in issues),
                [path for path, _ in issues],
            )
    A, G, f = ps.A, ps.G, ps.f

    def rhs(t: float, y: np.ndarray, lagged: np.ndarray) -> np.ndarray:
        return A(t) @ y + G(t, lagged) + f(t)

    traj = method_of_steps(rhs, ps.v, ps.n, ps.tau, ps.horizon, ctrl, VectorTrajectory)
    logger.debug("system solved to t=%g with %d mesh points", traj.last_time, len(traj.mesh))
    return traj


def norm_curve(traj: VectorTrajectory, grid: Sequence[float]) -> np.ndarray:
    """g(tᵢ) = ‖u(tᵢ)‖ on ``grid``; raises DomainError outside the trajectory."""
    return np.array([float(np.linalg.norm(traj(t))) for t in grid])


class ResidualReport(BaseModel):
    """Worst margin of the norm differential inequality along a trajectory."""

    max_violation: float = Field(..., description="Largest D⁺g - (γg + αg^p(t-τ) + β), or -inf when nothing was checked")
    location: Optional[float] = Field(default=None, description="Time of the largest violation")
    checked: int = Field(..., description="Number of grid points asserted")
    delta: float = Field(..., description="Forward-difference step")
    passed: bool = Field(..., description="Whether every checked point stayed within tol·(1 + g)")


def residual_check(
    traj: VectorTrajectory,
    bd: BoundData,
    grid: Sequence[float],
    tol: float,
    delta: float = 1e-4,
) -> ResidualReport:
    """
    Check D⁺g(t) ≤ γ(t)g(t) + α(t)g^p(t-τ) + β(t) along ``traj``.

    The forward difference (g(t+δ) - g(t))/δ is compared with the right side
    at t, so a smooth g leaves a residual of order δ. Points with g(t) ≤ 1e-10
    and points whose t+δ leaves the trajectory are skipped.

    Args:
        traj: Vector trajectory
        bd: Bound data whose majorants are checked
        grid: Times in [0, last_time]
        tol: Tolerance, applied as tol·(1 + |g(t)|)
        delta: Forward-difference step δ > 0

    Returns:
        ResidualReport
    """
    if not delta > 0:
        raise InvalidInputError("forward-difference step must be positive", ["delta"])

    def g(t: float) -> float:
        return float(np.linalg.norm(traj(t)))

    def right_side(t: float) -> float:
        return bd.gamma(t) * g(t) + bd.alpha(t) * g(t - bd.tau) ** bd.p + bd.beta(t)

    worst, where, checked, passed = -np.inf, None, 0, True
    for t in grid:
        if t < 0 or t + delta > traj.last_time:
            continue
        here = g(t)
        if here <= ZERO_NORM:
            continue
        slope = (g(t + delta) - here) / delta
        violation = slope - right_side(t)
        checked += 1
        if violation > worst:
            worst, where = violation, float(t)
        if violation > tol * (1.0 + abs(here)):
            passed = False
    return ResidualReport(max_violation=float(worst), location=where, checked=checked, delta=delta, passed=passed)
