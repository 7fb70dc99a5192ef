"""
Problem data for the delay evolution equation u' = A(t)u + G(t, u(t-τ)) + f(t).

Holds the time-dependent coefficient wrappers, the nonlinearity catalog, the
sharp logarithmic-norm extraction γ(t) = λ_max((A + Aᵀ)/2), and the two
records everything else consumes: ProblemSpec (the vector problem) and
BoundData (the scalar majorants γ, α, β with p, τ and the history norm w).
"""

import math
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from delayguard.errors import InvalidInputError

# Relative slack allowed when comparing a supplied γ against the derived one.
GAMMA_DOMINANCE_TOL = 1e-10

NONLINEARITY_CATALOG = ("zero", "sharp_power", "soft_power")


def norm(u: Any) -> float:
    """Euclidean norm; the Hilbert-space norm of the finite-dimensional setting."""
    return float(np.linalg.norm(np.asarray(u, dtype=float).ravel()))


class TimeScalarFn:
    """
    A real function of time, optionally carrying an exact antiderivative.

    Quadrature uses the antiderivative when present and passes ``breakpoints``
    (kinks or jumps of the integrand) on to the adaptive integrator.
    """

    __slots__ = ("_fn", "antiderivative", "breakpoints", "label", "constant_value")

    def __init__(
        self,
        fn: Callable[[float], float],
        antiderivative: Optional[Callable[[float], float]] = None,
        breakpoints: Sequence[float] = (),
        label: str = "",
        constant_value: Optional[float] = None,
    ):
        self._fn = fn
        self.antiderivative = antiderivative
        self.breakpoints: Tuple[float, ...] = tuple(sorted(float(b) for b in breakpoints))
        self.label = label
        self.constant_value = constant_value

    def __call__(self, t: float) -> float:
        return float(self._fn(t))

    def __repr__(self) -> str:
        return f"TimeScalarFn({self.label or '<callable>'})"

    @classmethod
    def constant(cls, value: float) -> "TimeScalarFn":
        """Constant function with its exact antiderivative c·t."""
        c = float(value)
        return cls(lambda t: c, antiderivative=lambda t: c * t, label=repr(c), constant_value=c)

    @classmethod
    def from_expression(cls, ast: Any) -> "TimeScalarFn":
        """Wrap a parsed expression; constant trees get an exact antiderivative."""
        if ast.is_constant():
            fn = cls.constant(ast.evaluate(0.0))
            fn.label = ast.text
            return fn
        return cls(ast.evaluate, label=ast.text)

    def scaled(self, factor: float) -> "TimeScalarFn":
        k = float(factor)
        anti = self.antiderivative
        return TimeScalarFn(
            lambda t: k * self._fn(t),
            antiderivative=(lambda t: k * anti(t)) if anti is not None else None,
            breakpoints=self.breakpoints,
            label=f"{k!r}*({self.label})",
            constant_value=None if self.constant_value is None else k * self.constant_value,
        )

    def antiderivative_mismatch(self, points: Sequence[float], step: float = 1e-5) -> float:
        """Largest |F'(t) - f(t)| over ``points`` with F' by central differences."""
        if self.antiderivative is None:
            return 0.0
        worst = 0.0
        for t in points:
            slope = (self.antiderivative(t + step) - self.antiderivative(t - step)) / (2 * step)
            worst = max(worst, abs(slope - self(t)))
        return worst

    def vanishes_on(self, a: float, b: float, samples: int = 401) -> bool:
        """True when the function is zero at every sampled point of [a, b]."""
        if self.constant_value is not None:
            return self.constant_value == 0.0
        return all(self(t) == 0.0 for t in np.linspace(a, b, samples))


class VectorFn:
    """A map t -> ℝⁿ (forcing f or history v)."""

    __slots__ = ("dimension", "_fn", "label")

    def __init__(self, dimension: int, fn: Callable[[float], Any], label: str = ""):
        if dimension < 1:
            raise InvalidInputError("dimension must be a positive integer", ["dimension"])
        self.dimension = int(dimension)
        self._fn = fn
        self.label = label

    def __call__(self, t: float) -> np.ndarray:
        value = np.asarray(self._fn(t), dtype=float).reshape(-1)
        if value.shape != (self.dimension,):
            raise InvalidInputError(
                f"{self.label or 'vector function'} returned shape {value.shape}, "
                f"expected ({self.dimension},)"
            )
        return value

    @classmethod
    def zero(cls, dimension: int) -> "VectorFn":
        z = np.zeros(dimension)
        return cls(dimension, lambda t: z, label="0")

    @classmethod
    def constant(cls, values: Sequence[float]) -> "VectorFn":
        vec = np.asarray(values, dtype=float)
        return cls(vec.size, lambda t: vec, label=repr(list(vec)))

    @classmethod
    def from_expressions(cls, asts: Sequence[Any]) -> "VectorFn":
        items = list(asts)
        return cls(
            len(items),
            lambda t: [a.evaluate(t) for a in items],
            label="[" + ", ".join(a.text for a in items) + "]",
        )


class HistoryFn(VectorFn):
    """Initial history v on [-τ, 0]."""

    def max_jump(self, tau: float, points: int = 4001) -> float:
        """Largest norm difference between neighbouring points of a fine grid."""
        grid = np.linspace(-tau, 0.0, points)
        values = np.array([self(t) for t in grid])
        return float(np.max(np.linalg.norm(np.diff(values, axis=0), axis=1)))


class MatrixFn:
    """A map t -> real n×n matrix A(t)."""

    __slots__ = ("dimension", "_fn", "label")

    def __init__(self, dimension: int, fn: Callable[[float], Any], label: str = ""):
        if dimension < 1:
            raise InvalidInputError("dimension must be a positive integer", ["dimension"])
        self.dimension = int(dimension)
        self._fn = fn
        self.label = label

    def __call__(self, t: float) -> np.ndarray:
        value = np.asarray(self._fn(t), dtype=float)
        if value.shape != (self.dimension, self.dimension):
            raise InvalidInputError(
                f"matrix function returned shape {value.shape}, "
                f"expected ({self.dimension}, {self.dimension})",
                ["matrix"],
            )
        return value

    @classmethod
    def constant(cls, matrix: Any) -> "MatrixFn":
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"matrix must be square, got shape {m.shape}", ["matrix"])
        return cls(m.shape[0], lambda t: m, label=repr(m.tolist()))

    @classmethod
    def from_expressions(cls, rows: Sequence[Sequence[Any]]) -> "MatrixFn":
        table = [list(row) for row in rows]
        n = len(table)
        if any(len(row) != n for row in table):
            raise InvalidInputError("matrix expressions must form an n×n table", ["matrix"])
        return cls(n, lambda t: [[a.evaluate(t) for a in row] for row in table], label="expr")


def gamma_from_matrix(A: MatrixFn, t: float) -> float:
    """
    Sharp γ(t) with Re⟨u, A(t)u⟩ ≤ γ(t)‖u‖².

    Args:
        A: Matrix function
        t: Time

    Returns:
        Largest eigenvalue of the symmetric part (A + Aᵀ)/2

    Raises:
        InvalidInputError: If A(t) has non-finite entries
    """
    m = A(t)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"matrix A({t}) has non-finite entries", ["matrix"])
    sym = 0.5 * (m + m.T)
    return float(np.linalg.eigvalsh(sym)[-1])


def derived_gamma(A: MatrixFn) -> TimeScalarFn:
    """γ(t) evaluated pointwise through gamma_from_matrix."""
    return TimeScalarFn(lambda t: gamma_from_matrix(A, t), label="auto")


def _orthogonal(dimension: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dimension, dimension)))
    return q * np.sign(np.diag(r))


class NonlinearMap:
    """
    Delayed nonlinearity G(t, u) with declared exponent p and majorant α.

    The declared contract is ‖G(t,u)‖ ≤ α(t)‖u‖^p; verify_growth_majorant
    checks it by sampling.
    """

    __slots__ = ("name", "exponent", "alpha", "_fn")

    def __init__(
        self,
        name: str,
        exponent: float,
        alpha: TimeScalarFn,
        fn: Callable[[float, np.ndarray], Any],
    ):
        if not exponent > 1:
            raise InvalidInputError(f"exponent p must exceed 1, got {exponent}", ["p"])
        self.name = name
        self.exponent = float(exponent)
        self.alpha = alpha
        self._fn = fn

    def __call__(self, t: float, u: Any) -> np.ndarray:
        return np.asarray(self._fn(t, np.asarray(u, dtype=float)), dtype=float)

    def __repr__(self) -> str:
        return f"NonlinearMap({self.name}, p={self.exponent})"


def make_nonlinearity(
    name: str,
    alpha: TimeScalarFn,
    p: float,
    dimension: int,
    rotation: Optional[Any] = None,
    seed: int = 0,
) -> NonlinearMap:
    """
    Build a catalog nonlinearity.

    Args:
        name: One of ``zero``, ``sharp_power``, ``soft_power``
        alpha: Majorant α(t)
        p: Exponent p > 1
        dimension: State dimension n
        rotation: Orthogonal Q for ``sharp_power``; drawn from ``seed`` when omitted
        seed: Seed for the default Q

    Returns:
        The nonlinearity
    """
    if name == "zero":
        zero = np.zeros(dimension)
        return NonlinearMap(name, p, alpha, lambda t, u: zero)

    if name == "soft_power":
        def soft(t: float, u: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(u)
            return alpha(t) * r ** (p - 1) * u if r > 0 else np.zeros_like(u)

        return NonlinearMap(name, p, alpha, soft)

    if name == "sharp_power":
        if rotation is None:
            q = np.eye(1) if dimension == 1 else _orthogonal(dimension, seed)
        else:
            q = np.asarray(rotation, dtype=float)
            if q.shape != (dimension, dimension) or not np.allclose(q.T @ q, np.eye(dimension), atol=1e-12):
                raise InvalidInputError("rotation must be an orthogonal n×n matrix", ["nonlinearity.rotation"])

        def sharp(t: float, u: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(u)
            return alpha(t) * r ** (p - 1) * (q @ u) if r > 0 else np.zeros_like(u)

        return NonlinearMap(name, p, alpha, sharp)

    raise InvalidInputError(
        f"unknown nonlinearity '{name}', expected one of {list(NONLINEARITY_CATALOG)}",
        ["nonlinearity.catalog"],
    )


class GrowthReport(BaseModel):
    """Outcome of sampling ‖G(t,u)‖ / (α(t)‖u‖^p)."""

    samples: int = Field(..., description="Number of sampled (t, u) pairs")
    max_ratio: float = Field(..., description="Largest observed ratio (inf when α vanishes but G does not)")
    worst_t: float = Field(..., description="Time of the worst sample")
    worst_u: List[float] = Field(default_factory=list, description="State of the worst sample")
    violated: bool = Field(..., description="Whether the ratio exceeded 1 + 1e-12")


def verify_growth_majorant(
    G: NonlinearMap,
    samples: int,
    radius: float,
    seed: Union[int, Sequence[int]],
    dimension: int,
    t_range: Tuple[float, float] = (0.0, 1.0),
) -> GrowthReport:
    """
    Empirically check ‖G(t,u)‖ ≤ α(t)‖u‖^p.

    Args:
        G: Nonlinearity under test
        samples: Number of samples (≥ 1)
        radius: Radius of the ball u is drawn from (> 0)
        seed: RNG seed or seed sequence; the report is deterministic given it
        dimension: State dimension
        t_range: Interval t is drawn from

    Returns:
        GrowthReport with the worst ratio and its location
    """
    if samples < 1:
        raise InvalidInputError("samples must be at least 1", ["samples"])
    if not radius > 0:
        raise InvalidInputError("radius must be positive", ["radius"])

    rng = np.random.default_rng(seed)
    worst = (-1.0, t_range[0], np.zeros(dimension))
    for _ in range(samples):
        t = float(rng.uniform(*t_range))
        direction = rng.standard_normal(dimension)
        direction /= np.linalg.norm(direction)
        u = direction * radius * rng.uniform() ** (1.0 / dimension)
        bound = G.alpha(t) * norm(u) ** G.exponent
        size = norm(G(t, u))
        if bound > 0:
            ratio = size / bound
        else:
            ratio = math.inf if size > 0 else 0.0
        if ratio > worst[0]:
            worst = (ratio, t, u)

    ratio, t, u = worst
    return GrowthReport(
        samples=samples,
        max_ratio=ratio,
        worst_t=t,
        worst_u=[float(x) for x in u],
        violated=ratio > 1.0 + 1e-12,
    )


class BoundData(BaseModel):
    """Scalar majorants γ, α, β with p, τ and the history norm w on [-τ, 0]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma: TimeScalarFn
    alpha: TimeScalarFn
    beta: TimeScalarFn
    p: float = Field(..., gt=1.0, description="Growth exponent, p > 1")
    tau: float = Field(..., gt=0.0, description="Delay, τ > 0")
    w: TimeScalarFn = Field(..., description="History norm ‖v(t)‖ on [-τ, 0]")

    def replace(self, **changes: Any) -> "BoundData":
        return self.model_copy(update=changes)

    def sample_violations(self, horizon: float, points: int = 401) -> List[Tuple[str, str]]:
        """Sampled nonnegativity checks of α, β on [0, horizon] and w on [-τ, 0]."""
        issues: List[Tuple[str, str]] = []
        for name, fn in (("alpha", self.alpha), ("beta", self.beta)):
            values = [fn(t) for t in np.linspace(0.0, horizon, points)]
            if min(values) < 0 or not all(map(math.isfinite, values)):
                issues.append((name, f"{name}(t) must be finite and nonnegative on [0, {horizon}]"))
        hist = [self.w(t) for t in np.linspace(-self.tau, 0.0, points)]
        if min(hist) < 0:
            issues.append(("history", "history norm must be nonnegative"))
        return issues


class ProblemSpec(BaseModel):
    """One instance of u' = A(t)u + G(t, u(t-τ)) + f(t), u = v on [-τ, 0]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(..., ge=1, description="State dimension")
    tau: float = Field(..., gt=0.0, description="Delay, τ > 0")
    p: float = Field(..., gt=1.0, description="Growth exponent, p > 1")
    horizon: float = Field(..., description="Final time T > τ")
    A: MatrixFn
    G: NonlinearMap
    f: VectorFn
    beta: TimeScalarFn
    v: HistoryFn
    gamma: Optional[TimeScalarFn] = Field(default=None, description="Supplied γ majorant; derived from A when omitted")

    @model_validator(mode="after")
    def validate_shape(self) -> "ProblemSpec":
        if not self.horizon > self.tau:
            raise ValueError(f"horizon must exceed tau (T > τ), got T={self.horizon}, τ={self.tau}")
        for name, dim in (("A", self.A.dimension), ("f", self.f.dimension), ("v", self.v.dimension)):
            if dim != self.n:
                raise ValueError(f"{name} has dimension {dim}, expected n={self.n}")
        if self.G.exponent != self.p:
            raise ValueError(f"nonlinearity exponent {self.G.exponent} differs from p={self.p}")
        return self

    @property
    def alpha(self) -> TimeScalarFn:
        return self.G.alpha

    def bound_data(self) -> BoundData:
        """The scalar majorant triple feeding the comparison equation."""
        v = self.v
        return BoundData(
            gamma=self.gamma if self.gamma is not None else derived_gamma(self.A),
            alpha=self.alpha,
            beta=self.beta,
            p=self.p,
            tau=self.tau,
            w=TimeScalarFn(lambda t: norm(v(t)), label="|v|"),
        )

    def sample_violations(self, points: int = 401, jump_modulus: Optional[float] = None) -> List[Tuple[str, str]]:
        """
        Sampled checks of the invariants that cannot be enforced structurally.

        Covers α, β ≥ 0, ‖f(t)‖ ≤ β(t), finiteness of A, dominance of a supplied γ
        over the derived one, and continuity of v.

        Returns:
            List of (field_path, message) pairs; empty when everything holds
        """
        issues = self.bound_data().sample_violations(self.horizon, points)
        grid = np.linspace(0.0, self.horizon, points)
        for t in grid:
            excess = norm(self.f(t)) - self.beta(t)
            if excess > 1e-12 * (1.0 + self.beta(t)):
                issues.append(("forcing.beta", f"‖f(t)‖ exceeds β(t) at t={t:.6g} by {excess:.3g}"))
                break
        try:
            derived = [gamma_from_matrix(self.A, t) for t in grid]
        except InvalidInputError as e:
            issues.append(("matrix", str(e)))
            derived = []
        if self.gamma is not None:
            for t, g in zip(grid, derived):
                if self.gamma(t) < g - GAMMA_DOMINANCE_TOL * (1.0 + abs(g)):
                    issues.append(("gamma", f"supplied γ({t:.6g})={self.gamma(t):.6g} is below the sharp value {g:.6g}"))
                    break
        modulus = jump_modulus
        if modulus is None:
            scale = max(norm(self.v(t)) for t in np.linspace(-self.tau, 0.0, 33))
            modulus = 1e-2 * (1.0 + scale)
        jump = self.v.max_jump(self.tau)
        if jump > modulus:
            issues.append(("history", f"history is not continuous on [-τ, 0] (jump {jump:.3g})"))
        return issues
