"""
Scenario documents.

A scenario is a JSON file describing one delay problem with expression
strings for every time-dependent coefficient, plus certificate options,
tolerances and output controls. Loading runs four validation stages (JSON
schema, field types and ranges, expressions, sampled invariants) and reports
every problem found with its field path in a single ScenarioError.
"""

import copy
import json
from typing import Any, Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from delayguard.errors import DelayGuardError, ExpressionSyntaxError, InvalidInputError, ScenarioError
from delayguard.expr import ExprAst, parse_expression
from delayguard.model import (
    NONLINEARITY_CATALOG,
    BoundData,
    HistoryFn,
    MatrixFn,
    ProblemSpec,
    TimeScalarFn,
    VectorFn,
    gamma_from_matrix,
    make_nonlinearity,
)
from delayguard.quadrature import GRID_DIVISIONS, QuadratureSettings, TailModel
from delayguard.steps import StepControl

AUTO = "auto"
AUTO_NORM = "auto_norm"
INVERSE_COMPARISON = "inverse_comparison"
# Safety factor of the sampled ‖f‖ majorant.
AUTO_NORM_FACTOR = 1.01
AUTO_NORM_SAMPLES = 9

SWEEP_PARAMETERS = ("alpha_scale", "w_scale", "beta_scale", "horizon", "q")

_EXPR = {"type": ["string", "number"]}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["name", "dimension", "tau", "p", "horizon", "matrix", "nonlinearity", "history"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "dimension": {"type": "integer"},
        "tau": {"type": "number"},
        "p": {"type": "number"},
        "horizon": {"type": "number"},
        "matrix": {"type": "array", "items": {"type": "array", "items": _EXPR}},
        "nonlinearity": {
            "type": "object",
            "required": ["catalog"],
            "additionalProperties": False,
            "properties": {
                "catalog": {"type": "string", "enum": list(NONLINEARITY_CATALOG)},
                "alpha": _EXPR,
                "seed": {"type": "integer"},
            },
        },
        "forcing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f": {"type": "array", "items": _EXPR},
                "beta": _EXPR,
            },
        },
        "history": {"type": "array", "items": _EXPR},
        "gamma": _EXPR,
        "certificate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theorem": {"type": "string", "enum": ["T1", "T2", "C1", "MU"]},
                "q": {"type": "number"},
                "tail": {"type": "object"},
                "grid_step": {"type": "number"},
                "mu": _EXPR,
                "mu_dot": _EXPR,
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                key: {"type": "number"}
                for key in ("abs_tol", "rel_tol", "max_subdivisions", "rtol", "atol", "first_step", "max_step")
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"grid_step": {"type": "number"}},
        },
    },
}


def _as_text(value: Union[str, float, int]) -> str:
    return value if isinstance(value, str) else repr(float(value))


class NonlinearitySpec(BaseModel):
    """Catalog nonlinearity with its majorant α."""

    catalog: Literal["zero", "sharp_power", "soft_power"]
    alpha: str = Field(default="0", description="Expression for α(t)")
    seed: int = Field(default=0, description="Seed for the orthogonal factor of sharp_power")

    @field_validator("alpha", mode="before")
    @classmethod
    def validate_alpha(cls, value: Any) -> Any:
        return _as_text(value)


class ForcingSpec(BaseModel):
    """Forcing f with its majorant β."""

    f: Optional[List[str]] = Field(default=None, description="Component expressions; zero when omitted")
    beta: str = Field(default=AUTO_NORM, description="Expression for β(t) or 'auto_norm'")

    @field_validator("f", mode="before")
    @classmethod
    def validate_f(cls, value: Any) -> Any:
        return [_as_text(v) for v in value] if isinstance(value, list) else value

    @field_validator("beta", mode="before")
    @classmethod
    def validate_beta(cls, value: Any) -> Any:
        return _as_text(value)


class CertificateOptions(BaseModel):
    """Which certificate to check and how."""

    theorem: Literal["T1", "T2", "C1", "MU"] = "T1"
    q: float = Field(default=2.0, description="Theorem-2 factor q > 1")
    tail: TailModel = Field(default_factory=TailModel)
    grid_step: Optional[float] = Field(default=None, gt=0.0, description="Grid step for suprema; τ/50 when omitted")
    mu: Optional[str] = Field(default=None, description="μ(t) expression or 'inverse_comparison'")
    mu_dot: Optional[str] = Field(default=None, description="μ̇(t) expression; central differences when omitted")

    @field_validator("mu", "mu_dot", mode="before")
    @classmethod
    def validate_mu(cls, value: Any) -> Any:
        return None if value is None else _as_text(value)

    @field_validator("q")
    @classmethod
    def validate_q(cls, value: float) -> float:
        if not value > 1:
            raise ValueError(f"q > 1 required, got {value}")
        return value


class Tolerances(BaseModel):
    """Per-scenario overrides of quadrature and stepper settings."""

    abs_tol: Optional[float] = Field(default=None, gt=0.0)
    rel_tol: Optional[float] = Field(default=None, gt=0.0)
    max_subdivisions: Optional[int] = Field(default=None, ge=1)
    rtol: Optional[float] = Field(default=None, gt=0.0)
    atol: Optional[float] = Field(default=None, gt=0.0)
    first_step: Optional[float] = Field(default=None, gt=0.0)
    max_step: Optional[float] = Field(default=None, gt=0.0)

    def quadrature(self, base: QuadratureSettings) -> QuadratureSettings:
        update = {k: v for k, v in self.model_dump().items() if k in QuadratureSettings.model_fields and v is not None}
        return base.model_copy(update=update)

    def control(self, base: StepControl) -> StepControl:
        update = {k: v for k, v in self.model_dump().items() if k in StepControl.model_fields and v is not None}
        return base.model_copy(update=update)


class OutputOptions(BaseModel):
    grid_step: Optional[float] = Field(default=None, gt=0.0, description="Sampling step of trajectory.csv")


class ScenarioDoc(BaseModel):
    """Parsed scenario file."""

    model_config = ConfigDict(extra="forbid")

    name: str
    dimension: int = Field(..., ge=1)
    tau: float
    p: float
    horizon: float
    matrix: List[List[str]]
    nonlinearity: NonlinearitySpec
    forcing: ForcingSpec = Field(default_factory=ForcingSpec)
    history: List[str]
    gamma: str = Field(default=AUTO, description="Expression for γ(t) or 'auto'")
    certificate: CertificateOptions = Field(default_factory=CertificateOptions)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: OutputOptions = Field(default_factory=OutputOptions)

    @field_validator("matrix", mode="before")
    @classmethod
    def validate_matrix(cls, value: Any) -> Any:
        if isinstance(value, list):
            return [[_as_text(v) for v in row] if isinstance(row, list) else row for row in value]
        return value

    @field_validator("history", mode="before")
    @classmethod
    def validate_history(cls, value: Any) -> Any:
        return [_as_text(v) for v in value] if isinstance(value, list) else value

    @field_validator("gamma", mode="before")
    @classmethod
    def validate_gamma(cls, value: Any) -> Any:
        return _as_text(value)

    @field_validator("tau")
    @classmethod
    def validate_tau(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"τ > 0 required, got {value}")
        return value

    @field_validator("p")
    @classmethod
    def validate_p(cls, value: float) -> float:
        if not value > 1:
            raise ValueError(f"p > 1 required, got {value}")
        return value


class LoadedScenario(NamedTuple):
    doc: ScenarioDoc
    problem: ProblemSpec
    bound: BoundData
    options: CertificateOptions
    quadrature: QuadratureSettings
    control: StepControl
    mu: Optional[TimeScalarFn]
    mu_dot: Optional[TimeScalarFn]


def _schema_issues(data: Any) -> List[Tuple[str, str]]:
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    issues = []
    for error in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        path = ".".join(str(p) for p in error.absolute_path)
        issues.append((path, error.message))
    return issues


def _validation_issues(exc: ValidationError) -> List[Tuple[str, str]]:
    return [(".".join(str(p) for p in err["loc"]), err["msg"]) for err in exc.errors()]


class _Expressions:
    """Parses expression fields, collecting located errors by field path."""

    def __init__(self) -> None:
        self.issues: List[Tuple[str, str]] = []
        self.warnings: List[str] = []

    def parse(self, path: str, text: str, interval: Tuple[float, float]) -> Optional[ExprAst]:
        try:
            ast = parse_expression(text)
            ast.check_domain(*interval)
        except ExpressionSyntaxError as e:
            self.issues.append((path, str(e)))
            return None
        self.warnings.extend(f"{path}: {w}" for w in ast.warnings)
        return ast

    def parse_all(self, path: str, texts: Sequence[str], interval: Tuple[float, float]) -> List[Optional[ExprAst]]:
        return [self.parse(f"{path}.{i}", text, interval) for i, text in enumerate(texts)]


def auto_norm_beta(f: VectorFn, horizon: float, panel: float) -> TimeScalarFn:
    """
    Continuous piecewise-linear majorant of ‖f‖.

    Node values are 1.01 × the largest sampled ‖f‖ over the panels adjacent to
    the node, so the linear interpolant dominates every sample.
    """
    count = max(1, int(np.ceil(horizon / panel)))
    nodes = np.linspace(0.0, horizon, count + 1)
    panel_max = np.array([
        max(float(np.linalg.norm(f(s))) for s in np.linspace(a, b, AUTO_NORM_SAMPLES))
        for a, b in zip(nodes[:-1], nodes[1:])
    ])
    if not np.any(panel_max > 0):
        return TimeScalarFn.constant(0.0)
    left = np.concatenate([[0.0], panel_max])
    right = np.concatenate([panel_max, [0.0]])
    heights = AUTO_NORM_FACTOR * np.maximum(left, right)
    return TimeScalarFn(lambda t: float(np.interp(t, nodes, heights)), label=AUTO_NORM)


def load_scenario(
    text: str,
    base_quadrature: Optional[QuadratureSettings] = None,
    base_control: Optional[StepControl] = None,
) -> LoadedScenario:
    """
    Parse and validate a scenario document.

    Args:
        text: JSON document
        base_quadrature: Settings the scenario's ``tolerances`` refine
        base_control: Step control the scenario's ``tolerances`` refine

    Returns:
        LoadedScenario with the problem, its bound data and the run settings

    Raises:
        ScenarioError: Listing every offending field path
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError([("", f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")]) from e
    return load_scenario_data(data, base_quadrature, base_control)


def load_scenario_data(
    data: Any,
    base_quadrature: Optional[QuadratureSettings] = None,
    base_control: Optional[StepControl] = None,
) -> LoadedScenario:
    """load_scenario for an already decoded document."""
    issues = _schema_issues(data)
    if issues:
        raise ScenarioError(issues)
    try:
        doc = ScenarioDoc(**data)
    except ValidationError as e:
        raise ScenarioError(_validation_issues(e)) from e

    n, tau, horizon = doc.dimension, doc.tau, doc.horizon
    issues = []
    if not horizon > tau:
        issues.append(("horizon", f"horizon T > τ required, got T={horizon}, τ={tau}"))
    if len(doc.matrix) != n or any(len(row) != n for row in doc.matrix):
        issues.append(("matrix", f"matrix must be {n}×{n}"))
    if len(doc.history) != n:
        issues.append(("history", f"history needs {n} components, got {len(doc.history)}"))
    if doc.forcing.f is not None and len(doc.forcing.f) != n:
        issues.append(("forcing.f", f"forcing needs {n} components, got {len(doc.forcing.f)}"))
    if doc.certificate.theorem == "MU" and doc.certificate.mu is None:
        issues.append(("certificate.mu", "MU certificates need a μ expression"))
    if issues:
        raise ScenarioError(issues)

    span = (0.0, horizon)
    exprs = _Expressions()
    matrix = [exprs.parse_all(f"matrix.{i}", row, span) for i, row in enumerate(doc.matrix)]
    alpha = exprs.parse("nonlinearity.alpha", doc.nonlinearity.alpha, span)
    history = exprs.parse_all("history", doc.history, (-tau, 0.0))
    forcing = exprs.parse_all("forcing.f", doc.forcing.f, span) if doc.forcing.f is not None else []
    beta = exprs.parse("forcing.beta", doc.forcing.beta, span) if doc.forcing.beta != AUTO_NORM else None
    gamma = exprs.parse("gamma", doc.gamma, span) if doc.gamma != AUTO else None
    mu = mu_dot = None
    if doc.certificate.mu is not None and doc.certificate.mu != INVERSE_COMPARISON:
        mu = exprs.parse("certificate.mu", doc.certificate.mu, (-tau, horizon))
    if doc.certificate.mu_dot is not None:
        mu_dot = exprs.parse("certificate.mu_dot", doc.certificate.mu_dot, span)
    if exprs.issues:
        raise ScenarioError(exprs.issues)

    try:
        flat = [a for row in matrix for a in row]
        if all(a.is_constant() for a in flat):
            A = MatrixFn.constant([[a.evaluate(0.0) for a in row] for row in matrix])
        else:
            A = MatrixFn.from_expressions(matrix)
        f = VectorFn.from_expressions(forcing) if forcing else VectorFn.zero(n)
        v = HistoryFn(n, lambda t, h=history: [a.evaluate(t) for a in h], label="history")
        alpha_fn = TimeScalarFn.from_expression(alpha)
        G = make_nonlinearity(doc.nonlinearity.catalog, alpha_fn, doc.p, n, seed=doc.nonlinearity.seed)
        quadrature = doc.tolerances.quadrature(base_quadrature or QuadratureSettings())
        control = doc.tolerances.control(base_control or StepControl())
        beta_fn = TimeScalarFn.from_expression(beta) if beta is not None else auto_norm_beta(f, horizon, tau / GRID_DIVISIONS)
        if gamma is not None:
            gamma_fn: Optional[TimeScalarFn] = TimeScalarFn.from_expression(gamma)
        elif A.label != "expr":
            gamma_fn = TimeScalarFn.constant(gamma_from_matrix(A, 0.0))
            gamma_fn.label = AUTO
        else:
            gamma_fn = None
        problem = ProblemSpec(n=n, tau=tau, p=doc.p, horizon=horizon, A=A, G=G, f=f, beta=beta_fn, v=v, gamma=gamma_fn)
    except ValidationError as e:
        raise ScenarioError(_validation_issues(e)) from e
    except DelayGuardError as e:
        raise ScenarioError([(path, str(e)) for path in (getattr(e, "field_paths", None) or [""])]) from e

    issues = problem.sample_violations()
    if issues:
        raise ScenarioError(issues)
    return LoadedScenario(
        doc=doc,
        problem=problem,
        bound=problem.bound_data(),
        options=doc.certificate,
        quadrature=quadrature,
        control=control,
        mu=TimeScalarFn.from_expression(mu) if mu is not None else None,
        mu_dot=TimeScalarFn.from_expression(mu_dot) if mu_dot is not None else None,
    )


def _scaled(factor: float, text: Union[str, float, int]) -> str:
    return f"({float(factor)!r})*({_as_text(text)})"


def apply_overrides(data: Dict[str, Any], params: Dict[str, float]) -> Dict[str, Any]:
    """
    Return a copy of a scenario document with sweep parameters applied.

    ``alpha_scale`` multiplies α, ``w_scale`` the history, ``beta_scale`` the
    forcing and its majorant; ``horizon`` and ``q`` replace the stored values.

    Raises:
        InvalidInputError: For an unknown parameter name
    """
    doc = copy.deepcopy(data)
    for name, value in params.items():
        if name == "alpha_scale":
            nl = doc.setdefault("nonlinearity", {})
            nl["alpha"] = _scaled(value, nl.get("alpha", "0"))
        elif name == "w_scale":
            doc["history"] = [_scaled(value, h) for h in doc.get("history", [])]
        elif name == "beta_scale":
            forcing = doc.setdefault("forcing", {})
            if "f" in forcing:
                forcing["f"] = [_scaled(value, x) for x in forcing["f"]]
            if forcing.get("beta", AUTO_NORM) != AUTO_NORM:
                forcing["beta"] = _scaled(value, forcing["beta"])
        elif name == "horizon":
            doc["horizon"] = float(value)
        elif name == "q":
            doc.setdefault("certificate", {})["q"] = float(value)
        else:
            raise InvalidInputError(
                f"unknown sweep parameter '{name}', expected one of {list(SWEEP_PARAMETERS)}", ["param"]
            )
    return doc
