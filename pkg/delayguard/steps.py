"""
Method-of-steps engine shared by the scalar comparison solver and the vector system.

On each segment [kτ, (k+1)τ] the delayed argument reads the history (for
t - τ ≤ 0) or the dense output of the previous segment, which reduces the
delay equation to an ordinary one. Segments are integrated with scipy's
Dormand–Prince 5(4) stepper (``RK45``) driven step by step, every kτ is a
mandatory mesh point with a fresh initial step, and each finished segment is
stored as a cubic Hermite interpolant through the accepted steps.
"""

import bisect
import logging
import math
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import RK45
from scipy.interpolate import CubicHermiteSpline

from delayguard.errors import DomainError, StepUnderflowError

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e150
UNDERFLOW_FACTOR = 1e-14
# Default max step is τ divided by this.
MAX_STEP_DIVISIONS = 64


class StepControl(BaseModel):
    """Tolerances and step bounds for the Runge–Kutta stepper."""

    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default=1e-9, gt=0.0, description="Relative tolerance")
    atol: float = Field(default=1e-12, gt=0.0, description="Absolute tolerance")
    first_step: Optional[float] = Field(default=None, gt=0.0, description="Initial step; chosen automatically when omitted")
    max_step: Optional[float] = Field(default=None, gt=0.0, description="Largest step; τ/64 when omitted")

    def resolved_max_step(self, tau: float) -> float:
        return self.max_step if self.max_step is not None else tau / MAX_STEP_DIVISIONS


class Segment(NamedTuple):
    start: float
    end: float
    mesh: np.ndarray
    spline: Optional[CubicHermiteSpline]
    values: np.ndarray


class _Overflow(ArithmeticError):
    pass


class Trajectory:
    """
    Piecewise dense solution on [-τ, last_time].

    Values on [-τ, 0] are delegated to the history function; afterwards they come
    from the per-segment cubic Hermite interpolants.
    """

    def __init__(
        self,
        tau: float,
        dimension: int,
        history: Callable[[float], np.ndarray],
        segments: Sequence[Segment],
        blown_up: bool = False,
        blowup_time: Optional[float] = None,
        clamped: int = 0,
    ):
        self.tau = tau
        self.dimension = dimension
        self._history = history
        self.segments: List[Segment] = list(segments)
        self._ends = [s.end for s in self.segments]
        self.blown_up = blown_up
        self.blowup_time = blowup_time
        self.clamped = clamped

    @property
    def last_time(self) -> float:
        return self.segments[-1].end if self.segments else 0.0

    @property
    def mesh(self) -> np.ndarray:
        if not self.segments:
            return np.array([0.0])
        return np.unique(np.concatenate([s.mesh for s in self.segments]))

    @property
    def breakpoints(self) -> np.ndarray:
        """Multiples of τ inside [0, last_time]."""
        count = int(math.floor(self.last_time / self.tau + 1e-12))
        return self.tau * np.arange(count + 1)

    def _check(self, t: float) -> None:
        slack = 1e-12 * max(1.0, abs(t))
        if t < -self.tau - slack or t > self.last_time + slack:
            raise DomainError(f"t={t} outside trajectory domain [{-self.tau}, {self.last_time}]")

    def _segment(self, t: float) -> Segment:
        index = min(bisect.bisect_left(self._ends, t), len(self.segments) - 1)
        return self.segments[index]

    def state(self, t: float) -> np.ndarray:
        self._check(t)
        if t <= 0.0 or not self.segments:
            return np.asarray(self._history(max(t, -self.tau)), dtype=float)
        seg = self._segment(t)
        if seg.spline is None:
            return seg.values[-1].copy()
        return np.asarray(seg.spline(t), dtype=float)

    def state_derivative(self, t: float) -> np.ndarray:
        self._check(t)
        if t < 0.0 or not self.segments:
            raise DomainError("derivative is only available on the integrated range [0, last_time]")
        seg = self._segment(t)
        if seg.spline is None:
            return np.zeros(self.dimension)
        return np.asarray(seg.spline(t, 1), dtype=float)

    def sample(self, grid: Sequence[float]) -> np.ndarray:
        return np.array([self.state(t) for t in grid])


class ScalarTrajectory(Trajectory):
    """Solution h of the scalar comparison equation."""

    def __call__(self, t: float) -> float:
        return float(self.state(t)[0])

    def derivative(self, t: float) -> float:
        return float(self.state_derivative(t)[0])


class VectorTrajectory(Trajectory):
    """Solution u of the vector delay system."""

    def __call__(self, t: float) -> np.ndarray:
        return self.state(t)

    def derivative(self, t: float) -> np.ndarray:
        return self.state_derivative(t)


def method_of_steps(
    rhs: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    history: Callable[[float], np.ndarray],
    dimension: int,
    tau: float,
    horizon: float,
    ctrl: StepControl,
    trajectory_cls: type = VectorTrajectory,
    clamp_nonnegative: bool = False,
) -> Trajectory:
    """
    Integrate u'(t) = rhs(t, u(t), u(t - τ)) on [0, horizon].

    Args:
        rhs: Right-hand side taking the delayed state explicitly
        history: State on [-τ, 0]
        dimension: State dimension
        tau: Delay
        horizon: Final time
        ctrl: Step control
        trajectory_cls: Trajectory class to build
        clamp_nonnegative: Clamp negative values to 0 and integrate on from the clamped state (scalar comparison solves)

    Returns:
        The trajectory; ``blown_up`` is set when max |u| passed the overflow threshold

    Raises:
        StepUnderflowError: If the step collapses below 1e-14·τ; carries the partial trajectory
    """
    max_step = ctrl.resolved_max_step(tau)
    floor = UNDERFLOW_FACTOR * tau
    segments: List[Segment] = []
    ends: List[float] = []
    clamped = 0

    def delayed(s: float) -> np.ndarray:
        if s <= 0.0 or not segments:
            return np.asarray(history(max(s, -tau)), dtype=float)
        seg = segments[min(bisect.bisect_left(ends, s), len(segments) - 1)]
        return np.asarray(seg.spline(s), dtype=float) if seg.spline is not None else seg.values[-1]

    def fun(t: float, y: np.ndarray) -> np.ndarray:
        try:
            out = np.asarray(rhs(t, y, delayed(t - tau)), dtype=float)
        except OverflowError as exc:
            raise _Overflow(t) from exc
        if not np.all(np.isfinite(out)):
            raise _Overflow(t)
        return out

    def build() -> Trajectory:
        return trajectory_cls(tau, dimension, history, segments, blown_up, blowup_time, clamped)

    def start(t: float, y: np.ndarray, t_end: float, first: Optional[float]) -> RK45:
        return RK45(fun, t, y, t_end, rtol=ctrl.rtol, atol=ctrl.atol,
                    first_step=min(first, t_end - t) if first else None, max_step=max_step)

    y0 = np.asarray(history(0.0), dtype=float).reshape(dimension)
    t0, k = 0.0, 0
    blown_up, blowup_time = False, None
    while t0 < horizon and not blown_up:
        t1 = min((k + 1) * tau, horizon)
        logger.debug("segment %d: restart on [%g, %g]", k, t0, t1)
        mesh, values = [t0], [y0.copy()]
        try:
            solver = start(t0, y0, t1, ctrl.first_step)
            while solver.status == "running":
                message = solver.step()
                if solver.status == "failed" or (solver.status == "running" and solver.t - mesh[-1] < floor):
                    _append(segments, ends, mesh, values, fun, clamp_nonnegative)
                    raise StepUnderflowError(
                        f"step size underflow at t={solver.t:.6g}: {message or 'step below 1e-14·τ'}",
                        build(),
                    )
                y = solver.y.copy()
                if not np.all(np.isfinite(y)):
                    raise _Overflow(solver.t)
                if clamp_nonnegative and np.any(y < 0):
                    clamped += int(np.sum(y < 0))
                    y = np.maximum(y, 0.0)
                    if solver.status == "running":
                        # continue from the clamped state, not the solver's own
                        solver = start(solver.t, y, t1, solver.step_size)
                mesh.append(solver.t)
                values.append(y)
                if np.max(np.abs(y)) > BLOWUP_THRESHOLD:
                    blown_up, blowup_time = True, solver.t
                    break
        except _Overflow:
            blown_up, blowup_time = True, mesh[-1]
        _append(segments, ends, mesh, values, fun, clamp_nonnegative)
        if blown_up:
            logger.warning("solution passed %.0e near t=%g; stopping", BLOWUP_THRESHOLD, blowup_time)
            break
        y0 = values[-1]
        t0, k = t1, k + 1

    if clamped:
        logger.warning("clamped %d negative values to 0", clamped)
    return build()


def _append(
    segments: List[Segment],
    ends: List[float],
    mesh: List[float],
    values: List[np.ndarray],
    fun: Callable[[float, np.ndarray], np.ndarray],
    clamp_nonnegative: bool,
) -> None:
    ts = np.asarray(mesh, dtype=float)
    ys = np.asarray(values, dtype=float)
    spline = None
    if len(ts) >= 2:
        try:
            slopes = np.array([fun(t, y) for t, y in zip(ts, ys)])
        except _Overflow:
            slopes = np.gradient(ys, ts, axis=0)
        spline = CubicHermiteSpline(ts, ys, slopes, axis=0)
    segments.append(Segment(float(ts[0]), float(ts[-1]), ts, spline, ys))
    ends.append(float(ts[-1]))
