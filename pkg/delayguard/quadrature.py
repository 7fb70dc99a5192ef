"""
Integral quantities of the comparison theory.

Everything that integrates goes through scipy's QUADPACK wrapper with the
tolerances of QuadratureSettings. The running integral ∫₀ᵗγ is memoized at
panel boundaries (one panel per grid step) so that ν, σ and the kernel are
cheap to evaluate on dense grids. Quantities defined by suprema or integrals
over [τ, ∞) are evaluated up to the horizon and finished by a TailModel.
"""

import logging
import math
import sys
import threading
import warnings
from functools import lru_cache
from typing import Callable, Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import minimize_scalar

from delayguard.errors import (
    AccuracyError,
    CertificateInapplicableError,
    DomainError,
    InvalidInputError,
    NumericalFailure,
)
from delayguard.model import BoundData, TimeScalarFn

logger = logging.getLogger(__name__)

# Grid step used when none is given: τ divided by this.
GRID_DIVISIONS = 50
# Panel width for the running integral when no delay sets the scale.
DEFAULT_PANEL = 0.02
# Largest x with e^x finite in double precision.
MAX_EXPONENT = math.log(sys.float_info.max)


class QuadratureSettings(BaseModel):
    """Tolerances for adaptive quadrature."""

    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(default=1e-10, gt=0.0, description="Absolute tolerance")
    rel_tol: float = Field(default=1e-8, gt=0.0, description="Relative tolerance")
    max_subdivisions: int = Field(default=200, ge=1, description="Upper bound on QUADPACK panel subdivisions")


DEFAULT_SETTINGS = QuadratureSettings()


class Integral(NamedTuple):
    value: float
    error: float


class TailModel(BaseModel):
    """
    Explicit assertions about the data beyond the computed horizon.

    ``kind`` finishes the kernel integral over [horizon, ∞). The remaining fields
    are optional assertions used by limit conditions; each one left unset keeps
    the corresponding verdict horizon-limited.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["closed_form", "exponential_bound", "truncate"] = Field(
        default="truncate", description="How the kernel tail over [horizon, ∞) is obtained"
    )
    value: Optional[float] = Field(default=None, description="closed_form: exact tail value")
    c: float = Field(default=0.0, description="exponential_bound: integrand ≤ c·e^{-λ(t-T)}")
    lam: float = Field(default=1.0, description="exponential_bound: decay rate λ")
    gamma_tail: Literal["none", "nonpositive", "negative", "harmonic"] = Field(
        default="none", description="Assertion on γ beyond the horizon"
    )
    gamma_rate: float = Field(default=0.0, ge=0.0, description="Rate for the negative and harmonic assertions")
    omega_tail: Optional[float] = Field(default=None, ge=0.0, description="Bound on (β/α)^{1/p}ν(t-τ) beyond the horizon")
    beta_nu_tail: Optional[float] = Field(default=None, ge=0.0, description="Bound on ∫_T^∞ βν")
    beta_gamma_ratio_vanishes: bool = Field(default=False, description="Assert β(t)/γ(t) → 0")
    condition_holds_beyond: bool = Field(default=False, description="Assert the Theorem-2 pointwise condition persists")

    @model_validator(mode="after")
    def validate_parameters(self) -> "TailModel":
        problem = self.parameter_problem()
        if problem:
            raise ValueError(problem)
        return self

    def parameter_problem(self) -> Optional[str]:
        if self.kind == "closed_form" and (self.value is None or not self.value >= 0):
            return "closed_form tail requires a nonnegative value"
        if self.kind == "exponential_bound":
            if not self.c >= 0:
                return "exponential_bound tail requires c ≥ 0"
            if not self.lam > 0:
                return "exponential_bound tail requires λ > 0"
        if self.gamma_tail in ("negative", "harmonic") and not self.gamma_rate > 0:
            return f"gamma_tail '{self.gamma_tail}' requires gamma_rate > 0"
        return None

    @property
    def certified(self) -> bool:
        return self.kind != "truncate"

    def contribution(self) -> float:
        if self.kind == "closed_form":
            return float(self.value or 0.0)
        if self.kind == "exponential_bound":
            return self.c / self.lam
        return 0.0

    @property
    def gamma_nonpositive(self) -> bool:
        return self.gamma_tail != "none"

    @property
    def gamma_diverges(self) -> bool:
        """∫₀ᵗγ → -∞ follows from the asserted γ tail."""
        return self.gamma_tail in ("negative", "harmonic")

    def gamma_bound(self, t: float) -> float:
        if self.gamma_tail == "negative":
            return -self.gamma_rate
        if self.gamma_tail == "harmonic":
            return -self.gamma_rate / (1.0 + t)
        return 0.0

    def check_against(self, bd: BoundData, horizon: float, points: int = 64) -> None:
        """
        Reject assertions the data already contradicts on the last τ before the horizon.

        Raises:
            InvalidInputError: If an asserted γ bound fails at a sampled point
        """
        problem = self.parameter_problem()
        if problem:
            raise InvalidInputError(problem, ["certificate.tail"])
        if self.gamma_tail == "none":
            return
        lo = max(0.0, horizon - bd.tau)
        for t in np.linspace(lo, horizon, points):
            bound = self.gamma_bound(t)
            if bd.gamma(t) > bound + 1e-12 * (1.0 + abs(bound)):
                raise InvalidInputError(
                    f"tail assertion gamma_tail={self.gamma_tail} contradicted at t={t:.6g}: "
                    f"γ={bd.gamma(t):.6g} exceeds {bound:.6g}",
                    ["certificate.tail.gamma_tail"],
                )


def checked_exp(exponent: float, what: str) -> float:
    """
    e^exponent, or NumericalFailure where the result leaves double range.

    Raises:
        NumericalFailure: If exponent exceeds MAX_EXPONENT
    """
    if exponent > MAX_EXPONENT:
        raise NumericalFailure(f"{what} overflows double precision (exponent {exponent:.6g})")
    return math.exp(exponent)


def scaled_exp(coefficient: float, exponent: float, what: str) -> float:
    """coefficient·e^exponent with the magnitude formed in log space."""
    if coefficient == 0.0:
        return 0.0
    return math.copysign(checked_exp(math.log(abs(coefficient)) + exponent, what), coefficient)


def _quad(
    fn: Callable[[float], float],
    a: float,
    b: float,
    settings: QuadratureSettings,
    breakpoints: Sequence[float] = (),
) -> Integral:
    if a == b:
        return Integral(0.0, 0.0)
    points = [x for x in breakpoints if a < x < b] or None
    kwargs = dict(epsabs=settings.abs_tol, epsrel=settings.rel_tol, limit=settings.max_subdivisions, points=points)
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, error = quad(fn, a, b, **kwargs)
        except IntegrationWarning as exc:
            warnings.simplefilter("ignore", IntegrationWarning)
            value, error = quad(fn, a, b, **kwargs)
            raise AccuracyError(f"quadrature on [{a:.6g}, {b:.6g}] did not converge: {exc}", value, error) from exc
    if not math.isfinite(value):
        raise AccuracyError(f"quadrature on [{a:.6g}, {b:.6g}] produced {value}", value, math.inf)
    return Integral(float(value), float(error))


def integrate(F: TimeScalarFn, a: float, b: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> Integral:
    """
    Integrate F over [a, b].

    Args:
        F: Integrand; its exact antiderivative is used when present
        a: Lower limit
        b: Upper limit, b ≥ a
        settings: Tolerances

    Returns:
        Integral(value, error estimate)

    Raises:
        AccuracyError: If subdivisions are exhausted without convergence
    """
    if a > b:
        raise InvalidInputError(f"integration limits out of order: a={a} > b={b}")
    if F.antiderivative is not None:
        return Integral(float(F.antiderivative(b) - F.antiderivative(a)), 0.0)
    return _quad(F, a, b, settings, F.breakpoints)


class CumulativeIntegral:
    """
    t ↦ ∫_origin^t fn with values memoized at origin + k·panel.

    Panels are filled in order under a lock, so one instance can be shared by
    concurrent readers.
    """

    def __init__(
        self,
        fn: Callable[[float], float],
        origin: float,
        panel: float,
        settings: QuadratureSettings = DEFAULT_SETTINGS,
        breakpoints: Sequence[float] = (),
        antiderivative: Optional[Callable[[float], float]] = None,
    ):
        if not panel > 0:
            raise InvalidInputError("panel width must be positive")
        self.fn = fn
        self.origin = float(origin)
        self.panel = float(panel)
        self.settings = settings
        self.breakpoints = tuple(breakpoints)
        self.antiderivative = antiderivative
        self._values: List[float] = [0.0]
        self._errors: List[float] = [0.0]
        self._lock = threading.Lock()

    def _node(self, k: int) -> Integral:
        with self._lock:
            while len(self._values) <= k:
                j = len(self._values) - 1
                a = self.origin + j * self.panel
                step = _quad(self.fn, a, a + self.panel, self.settings, self.breakpoints)
                self._values.append(self._values[-1] + step.value)
                self._errors.append(self._errors[-1] + step.error)
            return Integral(self._values[k], self._errors[k])

    def integral(self, t: float) -> Integral:
        if t < self.origin:
            raise DomainError(f"t={t} lies before the integration origin {self.origin}")
        if self.antiderivative is not None:
            return Integral(float(self.antiderivative(t) - self.antiderivative(self.origin)), 0.0)
        k = int((t - self.origin) // self.panel)
        base = self._node(k)
        left = self.origin + k * self.panel
        part = _quad(self.fn, left, t, self.settings, self.breakpoints) if t > left else Integral(0.0, 0.0)
        return Integral(base.value + part.value, base.error + part.error)

    def __call__(self, t: float) -> float:
        return self.integral(t).value

    @property
    def error(self) -> float:
        """Accumulated error estimate of the memoized panels."""
        return self._errors[-1]


class GammaIntegral(CumulativeIntegral):
    """I(t) = ∫₀ᵗγ together with ν(t) = e^{-I(t)} and σ(t) = e^{-(I(t) - I(t-τ))}."""

    def __init__(self, gamma: TimeScalarFn, panel: float = DEFAULT_PANEL, settings: QuadratureSettings = DEFAULT_SETTINGS):
        super().__init__(gamma, 0.0, panel, settings, gamma.breakpoints, gamma.antiderivative)

    def log_nu(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"ν(t) is defined for t ≥ 0, got t={t}")
        return -self(t)

    def nu(self, t: float) -> float:
        """
        ν(t), which overflows once ∫₀ᵗγ drops below -MAX_EXPONENT.

        Raises:
            NumericalFailure: If ν(t) is not representable
        """
        return checked_exp(self.log_nu(t), f"ν({t:.6g})")

    def sigma(self, t: float, tau: float) -> float:
        if t < tau:
            raise DomainError(f"σ(t) is defined for t ≥ τ={tau}, got t={t}")
        return checked_exp(-(self(t) - self(t - tau)), f"σ({t:.6g})")


class DiscountedIntegral:
    """
    t ↦ [start·ν(origin) + ∫_origin^t fn·ν] / ν(t), memoized at origin + k·panel.

    Each panel rescales the previous node by e^{I(b) - I(a)} and adds the panel
    integral of fn(ξ)e^{I(b) - I(ξ)}, so ν itself is never formed and the value
    stays representable wherever the quotient is.
    """

    def __init__(
        self,
        fn: Callable[[float], float],
        gi: GammaIntegral,
        origin: float,
        start: float,
        settings: QuadratureSettings = DEFAULT_SETTINGS,
        breakpoints: Sequence[float] = (),
    ):
        self.fn = fn
        self.gi = gi
        self.origin = float(origin)
        self.panel = gi.panel
        self.settings = settings
        self.breakpoints = tuple(breakpoints)
        self._values: List[float] = [float(start)]
        self._errors: List[float] = [0.0]
        self._lock = threading.Lock()

    def _advance(self, a: float, b: float, base: Integral) -> Integral:
        gi, fn = self.gi, self.fn
        i_b = gi(b)

        def integrand(xi: float) -> float:
            return scaled_exp(fn(xi), i_b - gi(xi), "discounted integrand")

        part = _quad(integrand, a, b, self.settings, self.breakpoints)
        growth = checked_exp(i_b - gi(a), f"ν ratio on [{a:.6g}, {b:.6g}]")
        return Integral(base.value * growth + part.value, base.error * growth + part.error)

    def _node(self, k: int) -> Integral:
        with self._lock:
            while len(self._values) <= k:
                j = len(self._values) - 1
                a = self.origin + j * self.panel
                step = self._advance(a, a + self.panel, Integral(self._values[-1], self._errors[-1]))
                self._values.append(step.value)
                self._errors.append(step.error)
            return Integral(self._values[k], self._errors[k])

    def integral(self, t: float) -> Integral:
        if t < self.origin:
            raise DomainError(f"t={t} lies before the integration origin {self.origin}")
        k = int((t - self.origin) // self.panel)
        base = self._node(k)
        left = self.origin + k * self.panel
        return self._advance(left, t, base) if t > left else base

    def __call__(self, t: float) -> float:
        return self.integral(t).value

    @property
    def error(self) -> float:
        return self._errors[-1]


@lru_cache(maxsize=128)
def _gamma_integral(gamma: TimeScalarFn, panel: float, settings: QuadratureSettings) -> GammaIntegral:
    return GammaIntegral(gamma, panel, settings)


def nu(t: float, gamma: TimeScalarFn, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """ν(t) = exp(-∫₀ᵗγ); ν(0) = 1 exactly."""
    return _gamma_integral(gamma, DEFAULT_PANEL, settings).nu(t)


def sigma(t: float, gamma: TimeScalarFn, tau: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """σ(t) = exp(-∫_{t-τ}^t γ) for t ≥ τ."""
    return _gamma_integral(gamma, DEFAULT_PANEL, settings).sigma(t, tau)


class SupResult(NamedTuple):
    value: float
    argmax: float
    horizon_limited: bool
    unbounded: bool = False


class OmegaResult(NamedTuple):
    value: float
    argmax: float
    horizon_limited: bool
    unbounded: bool


class TailResult(NamedTuple):
    value: float
    certified: bool
    error: float


def uniform_grid(start: float, stop: float, step: float) -> np.ndarray:
    count = max(1, int(math.ceil((stop - start) / step - 1e-9)))
    grid = start + step * np.arange(count + 1)
    grid[-1] = stop
    return grid


def _refine_max(objective: Callable[[float], float], grid: np.ndarray, values: np.ndarray, index: int) -> tuple:
    """Bounded Brent search for the maximum of ``objective`` next to grid[index]."""
    lo = grid[max(index - 1, 0)]
    hi = grid[min(index + 1, len(grid) - 1)]
    best_t, best = float(grid[index]), float(values[index])
    if hi > lo:
        res = minimize_scalar(lambda s: -objective(s), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, abs(hi))})
        if res.success and -res.fun > best:
            best_t, best = float(res.x), float(-res.fun)
    return best_t, best


class BoundQuadrature:
    """
    Memoized integral quantities for one BoundData.

    Obtain instances through ``bound_quadrature`` so that repeated calls share
    the panel caches.
    """

    def __init__(self, bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS):
        self.bd = bd
        self.settings = settings
        self.panel = bd.tau / GRID_DIVISIONS
        p = bd.p
        self.gamma_integral = GammaIntegral(bd.gamma, self.panel, settings)
        gi = self.gamma_integral
        marks = tuple(bd.alpha.breakpoints) + tuple(bd.beta.breakpoints) + tuple(bd.gamma.breakpoints)
        marks = marks + tuple(b + bd.tau for b in bd.gamma.breakpoints)

        def kernel_integrand(xi: float) -> float:
            a = bd.alpha(xi)
            if a == 0.0:
                return 0.0
            return scaled_exp(a, -gi(xi) + p * gi(xi - bd.tau), "kernel integrand")

        def beta_nu(xi: float) -> float:
            b = bd.beta(xi)
            return scaled_exp(b, -gi(xi), "βν")

        self.kernel_integrand = kernel_integrand
        self.kernel = CumulativeIntegral(kernel_integrand, bd.tau, self.panel, settings, marks)
        self.beta_nu = CumulativeIntegral(beta_nu, 0.0, self.panel, settings, marks)
        self.marks = marks
        self._discounted: Dict[Tuple[float, float], DiscountedIntegral] = {}
        self._h_tau: Optional[Integral] = None
        self._lock = threading.Lock()

    def I(self, t: float) -> float:
        return self.gamma_integral(t)

    def log_nu(self, t: float) -> float:
        return self.gamma_integral.log_nu(t)

    def nu(self, t: float) -> float:
        return self.gamma_integral.nu(t)

    def sigma(self, t: float) -> float:
        return self.gamma_integral.sigma(t, self.bd.tau)

    @property
    def error_budget(self) -> float:
        """Sum of the error estimates of every memoized integral so far."""
        extra = self._h_tau.error if self._h_tau is not None else 0.0
        scaled = sum(d.error for d in list(self._discounted.values()))
        return self.gamma_integral.error + self.kernel.error + self.beta_nu.error + scaled + extra

    def h_tau(self) -> float:
        """[w(0) + ∫₀^τ (α ν w(ξ-τ)^p + β ν) dξ] / ν(τ)."""
        with self._lock:
            if self._h_tau is None:
                bd = self.bd
                gi = self.gamma_integral
                i_tau = gi(bd.tau)

                def integrand(xi: float) -> float:
                    weight = checked_exp(i_tau - gi(xi), "h_τ weight")
                    return weight * (bd.alpha(xi) * bd.w(xi - bd.tau) ** bd.p + bd.beta(xi))

                marks = bd.alpha.breakpoints + bd.beta.breakpoints + bd.gamma.breakpoints
                part = _quad(integrand, 0.0, bd.tau, self.settings, marks)
                self._h_tau = Integral(scaled_exp(bd.w(0.0), i_tau, "w(0)/ν(τ)") + part.value, part.error)
            return self._h_tau.value

    def kernel_integral(self, t: float) -> float:
        """∫_τ^t α σ^p / ν^{p-1}, without the (p - 1) factor."""
        if t < self.bd.tau:
            raise DomainError(f"kernel integral needs t ≥ τ={self.bd.tau}, got t={t}")
        return self.kernel(t)

    def beta_nu_integral(self, a: float, b: float) -> float:
        """∫_a^b β ν for 0 ≤ a ≤ b."""
        return self.beta_nu(b) - self.beta_nu(a)

    def discounted(self, origin: float, start: float) -> DiscountedIntegral:
        """t ↦ [start·ν(origin) + ∫_origin^t βν] / ν(t), shared per (origin, start)."""
        key = (float(origin), float(start))
        with self._lock:
            if key not in self._discounted:
                self._discounted[key] = DiscountedIntegral(self.bd.beta, self.gamma_integral, origin, start,
                                                           self.settings, self.marks)
            return self._discounted[key]

    def tail_integral(self, horizon: float, tail: TailModel) -> TailResult:
        if horizon < self.bd.tau:
            raise InvalidInputError(f"horizon {horizon} must be at least τ={self.bd.tau}", ["horizon"])
        tail.check_against(self.bd, horizon)
        body = self.kernel.integral(horizon)
        return TailResult(body.value + tail.contribution(), tail.certified, body.error)

    def running_sup_integral(self, horizon: float, grid_step: Optional[float] = None,
                             tail: Optional[TailModel] = None) -> SupResult:
        return running_sup(self.gamma_integral, horizon, grid_step or self.panel, tail)

    def omega_sup(self, horizon: float, grid_step: Optional[float] = None,
                  tail: Optional[TailModel] = None) -> OmegaResult:
        """
        sup_{t ≥ τ} (β/α)^{1/p} ν(t - τ) on the grid [τ, horizon], refined locally.

        Raises:
            CertificateInapplicableError: If α vanishes where β is positive
        """
        bd = self.bd
        if bd.beta.vanishes_on(bd.tau, horizon):
            return OmegaResult(0.0, bd.tau, False, False)
        grid = uniform_grid(bd.tau, horizon, grid_step or self.panel)

        def log_phi(t: float) -> float:
            a, b = bd.alpha(t), bd.beta(t)
            if b == 0.0:
                return -math.inf
            if a == 0.0:
                raise CertificateInapplicableError(
                    f"α vanishes at t={t:.6g} where β={b:.6g} > 0, so ω is undefined",
                    suggestion="use the linear bound (g(0) + ∫₀ᵗ βν)/ν(t)",
                )
            return (math.log(b) - math.log(a)) / bd.p - self.I(t - bd.tau)

        logs = np.array([log_phi(t) for t in grid])
        index = int(np.argmax(logs))
        t_star, best = _refine_max(log_phi, grid, logs, index)
        value = math.exp(best) if best > -math.inf else 0.0
        unbounded = index == len(grid) - 1 and len(grid) > 1 and logs[-1] > logs[-2]
        horizon_limited = True
        if tail is not None and tail.omega_tail is not None:
            value = max(value, tail.omega_tail)
            horizon_limited = False
            unbounded = False
        if unbounded:
            logger.warning("ω grid supremum still increasing at the horizon t=%g", horizon)
        return OmegaResult(value, t_star, horizon_limited, unbounded)


def running_sup(gi: CumulativeIntegral, horizon: float, step: float, tail: Optional[TailModel]) -> SupResult:
    """
    Grid supremum of ``gi`` on [0, horizon] refined around its argmax.

    ``unbounded`` is set when the maximum sits at the horizon with the values
    still rising and no tail assertion caps the growth beyond it.
    """
    if not horizon > 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}", ["horizon"])
    grid = uniform_grid(0.0, horizon, step)
    values = np.array([gi(t) for t in grid])
    index = int(np.argmax(values))
    t_star, best = _refine_max(gi, grid, values, index)
    limited = tail is None or not tail.gamma_nonpositive
    unbounded = limited and index == len(grid) - 1 and len(grid) > 1 and values[-1] > values[-2]
    if unbounded:
        logger.warning("running integral still increasing at the horizon t=%g", horizon)
    return SupResult(best, t_star, limited, bool(unbounded))


@lru_cache(maxsize=64)
def bound_quadrature(bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS) -> BoundQuadrature:
    """Shared BoundQuadrature for ``bd``."""
    return BoundQuadrature(bd, settings)


def h_tau(bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    return bound_quadrature(bd, settings).h_tau()


def kernel_integral(t: float, bd: BoundData, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    return bound_quadrature(bd, settings).kernel_integral(t)


def tail_integral(bd: BoundData, horizon: float, tail: TailModel,
                  settings: QuadratureSettings = DEFAULT_SETTINGS) -> TailResult:
    """Kernel integral up to ``horizon`` plus the tail model's contribution."""
    return bound_quadrature(bd, settings).tail_integral(horizon, tail)


def running_sup_integral(
    gamma: TimeScalarFn,
    horizon: float,
    grid_step: float,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    tail: Optional[TailModel] = None,
) -> SupResult:
    """
    M = sup_t ∫₀ᵗγ over the grid [0, horizon], refined around the grid argmax.

    The result is horizon-limited unless ``tail`` asserts γ ≤ 0 beyond the horizon.
    """
    if not grid_step > 0:
        raise InvalidInputError("grid step must be positive", ["certificate.grid_step"])
    return running_sup(_gamma_integral(gamma, grid_step, settings), horizon, grid_step, tail)


def omega_sup(
    bd: BoundData,
    horizon: float,
    grid_step: Optional[float] = None,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    tail: Optional[TailModel] = None,
) -> OmegaResult:
    return bound_quadrature(bd, settings).omega_sup(horizon, grid_step, tail)
