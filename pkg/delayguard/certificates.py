"""
Stability certificates.

Each checker evaluates the hypotheses of one global-existence result on the
grid [τ, horizon], records every inequality as a ConditionMargin, computes the
resulting constants and returns an immutable Certificate. Conclusions that
depend on the behaviour of the data beyond the horizon are only drawn from
explicit TailModel assertions; otherwise the verdict is marked
horizon-limited.

Margin slack is reported with the numerical allowance already applied: strict
inequalities lose 10× the accumulated quadrature error, the μ condition gains
its comparison tolerance. A margin is satisfied iff its slack is positive.
"""

import logging
import math
from typing import Callable, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from delayguard.comparison import bound_theorem2, envelope_lemma1, zeta
from delayguard.errors import (
    CertificateInapplicableError,
    InvalidCertificateError,
    InvalidInputError,
    NumericalFailure,
    arithmetic_guard,
)
from delayguard.model import BoundData, TimeScalarFn
from delayguard.quadrature import (
    DEFAULT_SETTINGS,
    GRID_DIVISIONS,
    MAX_EXPONENT,
    CumulativeIntegral,
    GammaIntegral,
    QuadratureSettings,
    SupResult,
    TailModel,
    bound_quadrature,
    running_sup,
    scaled_exp,
    uniform_grid,
)

logger = logging.getLogger(__name__)

CERTIFIED = "certified"
HORIZON_LIMITED = "horizon-limited"
NOT_ESTABLISHED = "not established"

VERDICTS = ("global_existence", "bounded", "decays_to_zero")

LINEAR_ROUTE = "use the linear bound (g(0) + ∫₀ᵗ βν)/ν(t) (delayguard.comparison.linear_bound)"

# Strict inequalities need slack above this multiple of the quadrature error budget.
STRICT_FACTOR = 10.0


class ConditionMargin(BaseModel):
    """One checked inequality lhs < rhs (or ≤) with its worst location."""

    name: str = Field(..., description="Condition identifier")
    lhs: float = Field(..., description="Left side at the worst point")
    rhs: float = Field(..., description="Right side at the worst point")
    slack: float = Field(..., description="rhs - lhs with the numerical allowance applied")
    allowance: float = Field(default=0.0, description="Amount added to rhs - lhs before judging")
    location: Optional[float] = Field(default=None, description="Time of the worst point, if gridded")
    gates: List[str] = Field(default_factory=list, description="Verdicts that require this condition")

    @property
    def satisfied(self) -> bool:
        return self.slack > 0


class Certificate(BaseModel):
    """Verdict record of one certificate check."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theorem: Literal["T1", "T2", "C1", "MU"]
    global_existence: bool = False
    bounded: bool = False
    decays_to_zero: bool = False
    horizon_limited: bool = False
    horizon: float
    constants: Dict[str, Optional[float]] = Field(default_factory=dict)
    margins: List[ConditionMargin] = Field(default_factory=list)
    provenance: Dict[str, str] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    envelope: Optional[Callable[[float], Optional[float]]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def validate_verdicts(self) -> "Certificate":
        if (self.decays_to_zero or self.bounded) and not self.global_existence:
            raise ValueError("bounded/decays_to_zero require global_existence")
        for margin in self.margins:
            if not margin.satisfied:
                for gate in margin.gates:
                    if getattr(self, gate):
                        raise ValueError(f"condition {margin.name} has slack {margin.slack} but {gate} is set")
        return self

    @property
    def certified(self) -> bool:
        return self.global_existence

    def bound_at(self, t: float) -> Optional[float]:
        """Envelope value at t, or None where no bound is claimed."""
        return self.envelope(t) if self.envelope is not None else None


def _strict_margin(name: str, lhs: float, rhs: float, budget: float, location: Optional[float] = None) -> ConditionMargin:
    allowance = -STRICT_FACTOR * budget
    raw = rhs - lhs if not (math.isinf(rhs) and math.isinf(lhs)) else -math.inf
    return ConditionMargin(name=name, lhs=lhs, rhs=rhs, slack=raw + allowance, allowance=allowance,
                           location=location, gates=list(VERDICTS))


def _provenance(holds: bool, certified: bool) -> str:
    if not holds:
        return NOT_ESTABLISHED
    return CERTIFIED if certified else HORIZON_LIMITED


def _sup_provenance(sup: SupResult) -> str:
    if sup.unbounded:
        return NOT_ESTABLISHED
    return HORIZON_LIMITED if sup.horizon_limited else CERTIFIED


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x <= MAX_EXPONENT else math.inf


def _power_or_inf(base: float, exponent: float) -> float:
    """base^exponent, inf where the result leaves double range or base ≤ 0."""
    if base <= 0.0:
        return math.inf
    return _exp_or_inf(exponent * math.log(base))


def _theorem1(
    theorem: Literal["T1", "C1"],
    bd: BoundData,
    horizon: float,
    tail: TailModel,
    settings: QuadratureSettings,
    grid_step: Optional[float],
) -> Certificate:
    tail.check_against(bd, horizon)
    bq = bound_quadrature(bd, settings)
    p = bd.p
    notes: List[str] = []

    alpha_zero = bd.alpha.vanishes_on(bd.tau, horizon)
    if alpha_zero and not bd.beta.vanishes_on(bd.tau, horizon):
        raise CertificateInapplicableError(
            "α vanishes on [τ, horizon] while β does not, so ω is undefined", suggestion=LINEAR_ROUTE
        )
    if alpha_zero:
        notes.append("α ≡ 0 on the grid: the kernel integral vanishes and the condition holds for any data")

    h = bq.h_tau()
    omega = bq.omega_sup(horizon, grid_step, tail)
    tail_part = bq.tail_integral(horizon, tail)
    nu_tau = bq.nu(bd.tau)
    kernel_total = tail_part.value
    if kernel_total > 0:
        threshold = _power_or_inf((p - 1.0) * kernel_total, -1.0 / (p - 1.0)) - h * nu_tau
    else:
        threshold = math.inf

    budget = bq.error_budget
    margins = [
        _strict_margin("h_tau_positive", 0.0, h, 0.0),
        _strict_margin("omega_below_threshold", omega.value, threshold, budget, omega.argmax),
    ]
    if omega.unbounded:
        notes.append("ω grid supremum is still increasing at the horizon; the condition is not established")
        margins[1] = margins[1].model_copy(update={"slack": -math.inf})

    holds = all(m.satisfied for m in margins)
    horizon_limited = False
    constants: Dict[str, Optional[float]] = {
        "h_tau": h,
        "omega": omega.value,
        "tail_integral": kernel_total,
        "nu_tau": nu_tau,
        "M": None,
        "C": None,
        "bound": None,
    }
    provenance: Dict[str, str] = {
        "omega": CERTIFIED if not omega.horizon_limited else HORIZON_LIMITED,
        "tail_integral": CERTIFIED if tail_part.certified else HORIZON_LIMITED,
    }

    bounded = decays = False
    envelope = None
    if holds:
        horizon_limited = omega.horizon_limited or not tail_part.certified
        start = h * nu_tau + omega.value
        denominator = _power_or_inf(start, 1.0 - p) - (p - 1.0) * kernel_total
        constants["C"] = _power_or_inf(denominator, -1.0 / (p - 1.0)) - omega.value
        sup = bq.running_sup_integral(horizon, grid_step, tail)
        constants["M"] = sup.value
        provenance["M"] = _sup_provenance(sup)
        if sup.unbounded:
            notes.append("∫₀ᵗγ is still increasing at the horizon; boundedness not established")
        else:
            constants["bound"] = constants["C"] * _exp_or_inf(sup.value)
            bounded = True
        decays = tail.gamma_diverges
        if sup.horizon_limited:
            horizon_limited = True
        h_value, omega_value = h, omega.value

        def envelope(t: float) -> Optional[float]:
            if t < bd.tau:
                return None
            return envelope_lemma1(t, h_value, omega_value, bd, settings)

        if theorem == "C1":
            if not sup.horizon_limited:
                notes.append("stability: lyapunov")
            if decays:
                notes.append("stability: asymptotic")
    else:
        logger.info("%s condition not established (slack %.3g)", theorem, margins[1].slack)

    provenance["global_existence"] = _provenance(holds, not horizon_limited)
    provenance["bounded"] = _provenance(bounded, provenance.get("M") == CERTIFIED)
    provenance["decays_to_zero"] = _provenance(decays, True)
    constants["error_budget"] = bq.error_budget
    return Certificate(
        theorem=theorem,
        global_existence=holds,
        bounded=bounded,
        decays_to_zero=decays,
        horizon_limited=horizon_limited,
        horizon=horizon,
        constants=constants,
        margins=margins,
        provenance=provenance,
        notes=notes,
        envelope=envelope,
    )


def check_theorem1(
    bd: BoundData,
    horizon: float,
    tail: TailModel = TailModel(),
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    grid_step: Optional[float] = None,
) -> Certificate:
    """
    Check ω < [(p-1)I]^{-1/(p-1)} - h_τν(τ) with I the kernel integral over [τ, ∞).

    On success the certificate carries the envelope of h, the constant C and,
    under the bounded verdict, the uniform bound C·e^M.

    Args:
        bd: Bound data
        horizon: Last time of the grid
        tail: Tail model completing I and the limit conditions
        settings: Quadrature tolerances
        grid_step: Grid step for suprema (τ/50 when omitted)

    Returns:
        Certificate tagged T1

    Raises:
        CertificateInapplicableError: If α ≡ 0 while β > 0
        InvalidInputError: If a tail assertion is contradicted at the horizon
        NumericalFailure: If an intermediate quantity leaves double range
    """
    with arithmetic_guard("Theorem-1 check"):
        return _theorem1("T1", bd, horizon, tail, settings, grid_step)


def check_corollary1(
    bd: BoundData,
    horizon: float,
    tail: TailModel = TailModel(),
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    grid_step: Optional[float] = None,
) -> Certificate:
    """Unforced case β ≡ 0: the Theorem-1 check with ω = 0."""
    if not bd.beta.vanishes_on(0.0, horizon):
        raise InvalidInputError("check_corollary1 requires β ≡ 0", ["forcing.beta"])
    with arithmetic_guard("Corollary-1 check"):
        return _theorem1("C1", bd, horizon, tail, settings, grid_step)


def _ratio_decreasing(beta: TimeScalarFn, gamma: TimeScalarFn, horizon: float, points: int = 64) -> bool:
    """|β/γ| is nonincreasing and drops over the last quarter of [0, horizon]."""
    ratios = []
    for t in np.linspace(0.75 * horizon, horizon, points):
        g = gamma(t)
        if g == 0.0:
            return False
        ratios.append(abs(beta(t) / g))
    diffs = np.diff(ratios)
    return bool(np.all(diffs <= 1e-15 * max(ratios)) and ratios[-1] < ratios[0])


def check_theorem2(
    bd: BoundData,
    q: float,
    horizon: float,
    tail: TailModel = TailModel(),
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    grid_step: Optional[float] = None,
) -> Certificate:
    """
    Check α(t)σ^p(t) ≤ (q-1)β(t)/[qζ(t)]^p on [τ, horizon].

    On success the envelope is qζ(t). Boundedness needs M < ∞ and a tail bound
    on ∫βν; decay needs ∫γ → -∞ together with either that tail bound or
    β/γ → 0. With α ≡ β ≡ 0 the comparison solution is h_τν(τ)/ν(t) itself and
    the pointwise condition is vacuous.

    Raises:
        InvalidInputError: If q ≤ 1 or a tail assertion is contradicted
        CertificateInapplicableError: If β ≡ 0 while α ≢ 0 (the condition would force α ≡ 0)
        NumericalFailure: If an intermediate quantity leaves double range
    """
    if not q > 1:
        raise InvalidInputError(f"q must exceed 1, got {q}", ["certificate.q"])
    beta_zero = bd.beta.vanishes_on(bd.tau, horizon)
    if beta_zero and not bd.alpha.vanishes_on(bd.tau, horizon):
        raise CertificateInapplicableError(
            "β ≡ 0 while α ≢ 0: the pointwise condition can only hold with α ≡ 0",
            suggestion="use check_corollary1 for the unforced case",
        )
    with arithmetic_guard("Theorem-2 check"):
        return _theorem2(bd, q, horizon, tail, settings, grid_step, beta_zero)


def _theorem2(
    bd: BoundData,
    q: float,
    horizon: float,
    tail: TailModel,
    settings: QuadratureSettings,
    grid_step: Optional[float],
    beta_zero: bool,
) -> Certificate:
    tail.check_against(bd, horizon)
    bq = bound_quadrature(bd, settings)
    p = bd.p
    notes: List[str] = []

    h = bq.h_tau()
    margins = [_strict_margin("h_tau_positive", 0.0, h, 0.0)]
    holds = h > 0
    if beta_zero:
        notes.append("α ≡ β ≡ 0 on [τ, horizon]: h(t) = h_τν(τ)/ν(t) and the pointwise condition is vacuous")
    else:
        worst = ConditionMargin(name="pointwise_condition", lhs=0.0, rhs=0.0, slack=-math.inf, gates=list(VERDICTS))
        if holds:
            grid = uniform_grid(bd.tau, horizon, grid_step or bq.panel)
            for t in grid:
                lhs = bd.alpha(t) * bq.sigma(t) ** p
                rhs = (q - 1.0) * bd.beta(t) / (q * zeta(t, h, bd, settings)) ** p
                if rhs - lhs < worst.slack:
                    worst = ConditionMargin(name="pointwise_condition", lhs=lhs, rhs=rhs, slack=rhs - lhs,
                                            location=float(t), gates=list(VERDICTS))
        margins.append(worst)
        holds = holds and worst.satisfied

    # An identically zero β has nothing left to integrate beyond the horizon.
    beta_tail = 0.0 if bd.beta.constant_value == 0.0 else tail.beta_nu_tail
    exact_zero = bd.alpha.constant_value == 0.0 and bd.beta.constant_value == 0.0
    horizon_limited = not (tail.condition_holds_beyond or exact_zero)
    constants: Dict[str, Optional[float]] = {"h_tau": h, "q": q, "nu_tau": bq.nu(bd.tau), "M": None, "bound": None}
    provenance: Dict[str, str] = {}
    bounded = decays = False
    envelope = None
    if holds:
        h_value = h

        def envelope(t: float) -> Optional[float]:
            if t < bd.tau:
                return None
            return bound_theorem2(t, q, h_value, bd, settings)

        sup = bq.running_sup_integral(horizon, grid_step, tail)
        constants["M"] = sup.value
        provenance["M"] = _sup_provenance(sup)
        try:
            body = bq.beta_nu_integral(bd.tau, horizon)
        except NumericalFailure as e:
            body = math.inf
            notes.append(f"∫βν over [τ, horizon] is not representable: {e}")
        constants["beta_nu_integral"] = body
        if sup.unbounded:
            notes.append("∫₀ᵗγ is still increasing at the horizon; boundedness not established")
        elif beta_tail is not None and math.isfinite(body):
            bounded = True
            total = body + beta_tail
            constants["bound"] = q * _exp_or_inf(sup.value) * (h * bq.nu(bd.tau) + total)
            if sup.horizon_limited:
                horizon_limited = True
        elif beta_tail is None:
            notes.append("∫βν over [τ, ∞) is not tail-certified; boundedness not established")

        if tail.gamma_diverges:
            if beta_tail is not None and math.isfinite(body):
                decays = True
                provenance["decay_branch"] = "integrable βν"
            elif tail.beta_gamma_ratio_vanishes:
                if _ratio_decreasing(bd.beta, bd.gamma, horizon):
                    decays = True
                    provenance["decay_branch"] = "β/γ → 0"
                else:
                    notes.append("asserted β/γ → 0 but |β/γ| is not decreasing on the grid")
        else:
            notes.append("∫γ → -∞ is not asserted by the tail model; decay not established")
    else:
        logger.info("T2 pointwise condition fails (slack %.3g)", margins[-1].slack)

    provenance["global_existence"] = _provenance(holds, not horizon_limited)
    provenance["bounded"] = _provenance(bounded, provenance.get("M") == CERTIFIED)
    provenance["decays_to_zero"] = _provenance(decays, True)
    constants["error_budget"] = bq.error_budget
    return Certificate(
        theorem="T2",
        global_existence=holds,
        bounded=bounded,
        decays_to_zero=decays,
        horizon_limited=horizon_limited if holds else False,
        horizon=horizon,
        constants=constants,
        margins=margins,
        provenance=provenance,
        notes=notes,
        envelope=envelope,
    )


def _central_difference(fn: TimeScalarFn, step: float) -> TimeScalarFn:
    return TimeScalarFn(lambda t: (fn(t + step) - fn(t - step)) / (2.0 * step), label=f"d/dt {fn.label}")


def check_mu_certificate(
    mu: TimeScalarFn,
    mu_dot: Optional[TimeScalarFn],
    bd: BoundData,
    horizon: float,
    grid: Union[float, Sequence[float], None] = None,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    tol: float = 1e-6,
) -> Certificate:
    """
    Check a candidate μ > 0 with α μ(t)/μ^p(t-τ) + β μ(t) ≤ -γ(t) - μ̇(t)/μ(t) and w ≤ 1/μ on [-τ, 0].

    On success every solution satisfies ‖u(t)‖ ≤ 1/μ(t) on [0, horizon].

    Args:
        mu: Candidate μ
        mu_dot: Its derivative; central differences at 1e-6·τ when None
        bd: Bound data
        horizon: Last time checked
        grid: Grid step, explicit times in [0, horizon], or None for τ/50
        settings: Unused by the pointwise check; kept for a uniform checker signature
        tol: Comparison tolerance, credited as tol·(1 + |lhs| + |rhs|)

    Raises:
        InvalidCertificateError: If μ ≤ 0 at a sampled point
        NumericalFailure: If μ^p or 1/μ leaves double range
    """
    with arithmetic_guard("μ certificate check"):
        return _mu_certificate(mu, mu_dot, bd, horizon, grid, tol)


def _mu_certificate(
    mu: TimeScalarFn,
    mu_dot: Optional[TimeScalarFn],
    bd: BoundData,
    horizon: float,
    grid: Union[float, Sequence[float], None],
    tol: float,
) -> Certificate:
    tau = bd.tau
    if grid is None or isinstance(grid, (int, float)):
        step = float(grid) if grid else tau / GRID_DIVISIONS
        times = uniform_grid(0.0, horizon, step)
    else:
        times = np.asarray(sorted(float(t) for t in grid))
        if len(times) == 0 or times[0] < 0 or times[-1] > horizon:
            raise InvalidInputError("explicit μ grid must lie in [0, horizon]", ["certificate.grid_step"])
    history_times = np.linspace(-tau, 0.0, GRID_DIVISIONS + 1)

    for t in np.concatenate([history_times, times]):
        if not mu(t) > 0:
            raise InvalidCertificateError(f"μ({t:.6g}) = {mu(t):.6g} is not positive", ["certificate.mu"])
    derivative = mu_dot if mu_dot is not None else _central_difference(mu, 1e-6 * tau)

    worst = ConditionMargin(name="mu_inequality", lhs=0.0, rhs=0.0, slack=math.inf, gates=list(VERDICTS))
    for t in times:
        m = mu(t)
        lhs = bd.alpha(t) * m / mu(t - tau) ** bd.p + bd.beta(t) * m
        rhs = -bd.gamma(t) - derivative(t) / m
        allowance = tol * (1.0 + abs(lhs) + abs(rhs))
        if rhs - lhs + allowance < worst.slack:
            worst = ConditionMargin(name="mu_inequality", lhs=lhs, rhs=rhs, slack=rhs - lhs + allowance,
                                    allowance=allowance, location=float(t), gates=list(VERDICTS))

    history = ConditionMargin(name="history_below_inverse_mu", lhs=0.0, rhs=0.0, slack=math.inf, gates=list(VERDICTS))
    for t in history_times:
        lhs, rhs = bd.w(t), 1.0 / mu(t)
        allowance = tol * (1.0 + rhs)
        if rhs - lhs + allowance < history.slack:
            history = ConditionMargin(name="history_below_inverse_mu", lhs=lhs, rhs=rhs, slack=rhs - lhs + allowance,
                                      allowance=allowance, location=float(t), gates=list(VERDICTS))

    margins = [worst, history]
    holds = all(m.satisfied for m in margins)
    bound = max(1.0 / mu(t) for t in times)
    envelope = (lambda t: 1.0 / mu(t)) if holds else None
    return Certificate(
        theorem="MU",
        global_existence=holds,
        bounded=holds,
        decays_to_zero=False,
        horizon_limited=holds,
        horizon=horizon,
        constants={"bound": bound if holds else None, "mu_min_slack": worst.slack - worst.allowance},
        margins=margins,
        provenance={
            "global_existence": _provenance(holds, False),
            "bounded": _provenance(holds, False),
            "decays_to_zero": NOT_ESTABLISHED,
        },
        notes=["the μ bound is checked on [0, horizon] only"],
        envelope=envelope,
    )


class LongTermReport(BaseModel):
    """Long-term behaviour indicators with their provenance."""

    M: float = Field(..., description="sup of ∫₀ᵗγ over the grid")
    M_argmax: float = Field(..., description="Where the supremum is attained")
    M_provenance: str
    gamma_diverges: bool = Field(..., description="∫₀ᵗγ → -∞")
    gamma_provenance: str
    beta_nu_integral: float = Field(..., description="∫₀^T βν plus any asserted tail")
    beta_nu_finite: bool
    beta_nu_provenance: str
    ratio_decreasing: bool = Field(..., description="|β/γ| decreases over the last quarter of the grid")
    ratio_limit_zero: bool = Field(..., description="β/γ → 0")
    ratio_provenance: str


def classify_longterm(
    gamma: TimeScalarFn,
    beta: TimeScalarFn,
    horizon: float,
    tail: TailModel = TailModel(),
    settings: QuadratureSettings = DEFAULT_SETTINGS,
    grid_step: float = 0.02,
) -> LongTermReport:
    """Aggregate M, divergence of ∫γ, finiteness of ∫βν and the β/γ trend."""
    gi = GammaIntegral(gamma, grid_step, settings)
    sup = running_sup(gi, horizon, grid_step, tail)

    def beta_nu(xi: float) -> float:
        return scaled_exp(beta(xi), gi.log_nu(xi), "βν")

    try:
        body = CumulativeIntegral(beta_nu, 0.0, grid_step, settings, beta.breakpoints + gamma.breakpoints)(horizon)
    except NumericalFailure as e:
        logger.warning("∫βν up to the horizon is not representable: %s", e)
        body = math.inf
    finite = tail.beta_nu_tail is not None
    decreasing = _ratio_decreasing(beta, gamma, horizon)
    limit_zero = tail.beta_gamma_ratio_vanishes and decreasing
    return LongTermReport(
        M=sup.value,
        M_argmax=sup.argmax,
        M_provenance=_sup_provenance(sup),
        gamma_diverges=tail.gamma_diverges,
        gamma_provenance=CERTIFIED if tail.gamma_diverges else NOT_ESTABLISHED,
        beta_nu_integral=body + (tail.beta_nu_tail or 0.0),
        beta_nu_finite=finite,
        beta_nu_provenance=CERTIFIED if finite else NOT_ESTABLISHED,
        ratio_decreasing=decreasing,
        ratio_limit_zero=limit_zero,
        ratio_provenance=CERTIFIED if limit_zero else (HORIZON_LIMITED if decreasing else NOT_ESTABLISHED),
    )
