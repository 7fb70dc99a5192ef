"""
Core delayguard class.

Provides the run surface behind the CLI: simulate, certify, sweep and
selftest. Every run loads its scenario, applies command-line overrides,
writes its files into the output directory through a staging file and an
atomic rename, and returns a RunResult carrying the exit code.
"""

import copy
import csv
import io
import itertools
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from delayguard.certificates import (
    NOT_ESTABLISHED,
    VERDICTS,
    Certificate,
    LongTermReport,
    check_corollary1,
    check_mu_certificate,
    check_theorem1,
    check_theorem2,
    classify_longterm,
)
from delayguard.comparison import solve_comparison
from delayguard.config import Config
from delayguard.errors import (
    EXIT_INVALID,
    EXIT_NOT_CERTIFIED,
    EXIT_NUMERICAL,
    EXIT_OK,
    CertificateInapplicableError,
    DelayGuardError,
    InvalidInputError,
    NumericalFailure,
    ScenarioError,
    StepUnderflowError,
    exit_code_for,
)
from delayguard.model import TimeScalarFn, norm, verify_growth_majorant
from delayguard.quadrature import GRID_DIVISIONS, bound_quadrature, uniform_grid
from delayguard.reporters.base import RunResult
from delayguard.scenario import INVERSE_COMPARISON, SWEEP_PARAMETERS, LoadedScenario, apply_overrides, load_scenario_data
from delayguard.steps import ScalarTrajectory, Trajectory
from delayguard.system import solve_system

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["t", "g", "h", "env_t1", "env_t2", "nu", "sigma"]
SWEEP_COLUMNS = ["certified", "slack", "sup_g", "sup_h", "status"]
SAMPLES_DIR = Path(__file__).parent / "samples"
GROWTH_SAMPLES = 256
MAX_SWEEP_PARAMETERS = 2

# (sample, command, expected exit code)
SELFTEST_PLAN: List[Tuple[str, str, int]] = [
    ("linear_decay.json", "simulate", EXIT_OK),
    ("sharp_equality.json", "simulate", EXIT_OK),
    ("blowup.json", "simulate", EXIT_NUMERICAL),
    ("theorem1_certified.json", "certify", EXIT_OK),
    ("theorem1_alpha50.json", "certify", EXIT_NOT_CERTIFIED),
    ("mu_constant.json", "certify", EXIT_OK),
    ("invalid_tau.json", "certify", EXIT_INVALID),
]

ScenarioSource = Union[str, Path, Mapping[str, Any]]


def format_number(value: Optional[float]) -> str:
    """17 significant digits, '.' decimal; empty for a missing value."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {key: _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    return value


def dump_json(data: Any) -> str:
    """Indented JSON in insertion key order with non-finite floats as strings."""
    return json.dumps(_jsonable(data), indent=2, ensure_ascii=False) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write through a staging file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, staging = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".staging", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(staging, path)
    except BaseException:
        if os.path.exists(staging):
            os.unlink(staging)
        raise


def _section(doc: Dict[str, Any], key: str) -> Optional[Dict[str, Any]]:
    if key not in doc:
        doc[key] = {}
    section = doc[key]
    return section if isinstance(section, dict) else None


class RunOverrides(BaseModel):
    """Command-line values that take precedence over the scenario file."""

    horizon: Optional[float] = Field(default=None, gt=0.0, description="Replaces the scenario horizon")
    tol: Optional[float] = Field(default=None, gt=0.0, description="Relative tolerance of stepper and quadrature")
    grid_step: Optional[float] = Field(default=None, gt=0.0, description="Output and supremum grid step")
    seed: Optional[int] = Field(default=None, description="Seed for sharp_power rotations and growth sampling")

    def apply(self, data: Any) -> Any:
        """Copy of a decoded scenario document with the overrides written in."""
        if not isinstance(data, dict):
            return data
        doc = copy.deepcopy(data)
        if self.horizon is not None:
            doc["horizon"] = self.horizon
        if self.tol is not None:
            tolerances = _section(doc, "tolerances")
            if tolerances is not None:
                tolerances["rtol"] = self.tol
                tolerances["rel_tol"] = self.tol
        if self.grid_step is not None:
            for key in ("output", "certificate"):
                section = _section(doc, key)
                if section is not None:
                    section["grid_step"] = self.grid_step
        if self.seed is not None and isinstance(doc.get("nonlinearity"), dict):
            doc["nonlinearity"]["seed"] = self.seed
        return doc


class SelftestCheck(BaseModel):
    """One bundled sample run twice."""

    sample: str
    command: str
    expected_exit: int
    exit_code: int
    deterministic: bool = Field(..., description="Both runs wrote byte-identical files")

    @property
    def passed(self) -> bool:
        return self.exit_code == self.expected_exit and self.deterministic


def _certificate_status(cert: Certificate) -> str:
    if not cert.certified:
        return "not certified"
    return "certified (horizon-limited)" if cert.horizon_limited else "certified"


def _min_slack(cert: Certificate) -> Optional[float]:
    return min((m.slack for m in cert.margins), default=None)


def _safe(fn: Callable[[float], Optional[float]], t: float) -> Optional[float]:
    try:
        return fn(t)
    except (ArithmeticError, DelayGuardError):
        return None


class DelayGuard:
    """
    Main delayguard class.

    Turns scenario files into trajectory curves, certificate reports and
    sweep summaries using the numerical settings of a Config.
    """

    def __init__(self, config: Optional[Config] = None):
        """
        Initialize delayguard.

        Args:
            config: Configuration object (uses default if None)
        """
        self.config = config or Config()
        self.quadrature = self.config.quadrature_settings()
        self.control = self.config.step_control()

    # Loading

    def read(self, scenario: ScenarioSource) -> Any:
        """Decoded scenario document from a path or an already decoded mapping."""
        if isinstance(scenario, Mapping):
            return copy.deepcopy(dict(scenario))
        path = Path(scenario)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise InvalidInputError(f"cannot read scenario {path}: {e.strerror or e}", ["scenario"]) from e
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioError([("", f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")]) from e

    def load(self, scenario: ScenarioSource, overrides: Optional[RunOverrides] = None) -> LoadedScenario:
        """
        Load and validate a scenario with the configured base tolerances.

        Raises:
            ScenarioError: If the document is invalid
            InvalidInputError: If the file cannot be read
        """
        data = self.read(scenario)
        if overrides is not None:
            data = overrides.apply(data)
        return load_scenario_data(data, self.quadrature, self.control)

    def output_step(self, loaded: LoadedScenario) -> float:
        return loaded.doc.output.grid_step or self.config.output.grid_step or loaded.doc.tau / GRID_DIVISIONS

    def certificate_step(self, loaded: LoadedScenario) -> Optional[float]:
        return loaded.options.grid_step or self.config.quadrature.grid_step

    # Certificates

    def inverse_comparison(self, loaded: LoadedScenario) -> Tuple[TimeScalarFn, TimeScalarFn]:
        """μ = 1/h and μ̇ = -h'/h² from the comparison solution."""
        h = solve_comparison(loaded.bound, loaded.doc.horizon, loaded.control)
        if h.blown_up:
            raise NumericalFailure(f"comparison blow-up at T̃={h.blowup_time:.6g}; μ = 1/h is unavailable")

        def mu(t: float) -> float:
            value = h(t)
            return 1.0 / value if value > 0 else 0.0

        def mu_dot(t: float) -> float:
            return -h.derivative(t) / h(t) ** 2

        return TimeScalarFn(mu, label="1/h"), TimeScalarFn(mu_dot, label="-h'/h^2")

    def certify(self, loaded: LoadedScenario, theorem: Optional[str] = None) -> Certificate:
        """
        Run the certificate check selected by the scenario (or ``theorem``).

        Raises:
            CertificateInapplicableError: If the chosen route does not apply
            InvalidInputError: If options or tail assertions are invalid
            NumericalFailure: If quadrature or the comparison solve fails
        """
        options = loaded.options
        theorem = theorem or options.theorem
        bd, horizon, settings = loaded.bound, loaded.doc.horizon, loaded.quadrature
        step = self.certificate_step(loaded)
        logger.debug("checking %s for %s on [0, %g]", theorem, loaded.doc.name, horizon)
        if theorem == "T1":
            return check_theorem1(bd, horizon, options.tail, settings, step)
        if theorem == "C1":
            return check_corollary1(bd, horizon, options.tail, settings, step)
        if theorem == "T2":
            return check_theorem2(bd, options.q, horizon, options.tail, settings, step)
        if options.mu == INVERSE_COMPARISON:
            mu, mu_dot = self.inverse_comparison(loaded)
        elif loaded.mu is not None:
            mu, mu_dot = loaded.mu, loaded.mu_dot
        else:
            raise InvalidInputError("MU certificates need a μ expression", ["certificate.mu"])
        return check_mu_certificate(mu, mu_dot, bd, horizon, step, settings)

    def longterm(self, loaded: LoadedScenario) -> LongTermReport:
        bd = loaded.bound
        step = self.certificate_step(loaded) or bd.tau / GRID_DIVISIONS
        return classify_longterm(bd.gamma, bd.beta, loaded.doc.horizon, loaded.options.tail, loaded.quadrature, step)

    @staticmethod
    def inapplicable(loaded: LoadedScenario, error: CertificateInapplicableError) -> Certificate:
        """Certificate recording that the selected route does not apply."""
        notes = [f"inapplicable: {error}"]
        if error.suggestion:
            notes.append(f"suggestion: {error.suggestion}")
        return Certificate(
            theorem=loaded.options.theorem,
            horizon=loaded.doc.horizon,
            provenance={verdict: NOT_ESTABLISHED for verdict in VERDICTS},
            notes=notes,
        )

    def _envelope(self, loaded: LoadedScenario, theorem: str, messages: List[str]) -> Optional[Certificate]:
        try:
            cert = self.certify(loaded, theorem)
        except (DelayGuardError, ArithmeticError) as e:
            messages.append(f"{theorem} envelope unavailable: {e}")
            return None
        return cert if cert.certified else None

    # Trajectories

    def _solve(self, loaded: LoadedScenario, status: List[str]) -> Tuple[Optional[Trajectory], Optional[ScalarTrajectory]]:
        try:
            traj: Optional[Trajectory] = solve_system(loaded.problem, loaded.control, validate=False)
        except StepUnderflowError as e:
            traj = e.trajectory
            status.append(f"system {e}")
        if traj is not None and traj.blown_up:
            status.append(f"system blow-up at t={traj.blowup_time:.6g}")
        try:
            h: Optional[ScalarTrajectory] = solve_comparison(loaded.bound, loaded.doc.horizon, loaded.control)
        except StepUnderflowError as e:
            h = e.trajectory
            status.append(f"comparison {e}")
        if h is not None and h.blown_up:
            status.append(f"comparison blow-up at T̃={h.blowup_time:.6g}")
        return traj, h

    def suprema(self, loaded: LoadedScenario) -> Tuple[float, float]:
        """sup g and sup h over the output grid; inf once a solution blew up."""
        traj, h = self._solve(loaded, [])
        grid = uniform_grid(0.0, loaded.doc.horizon, self.output_step(loaded))
        results = []
        for curve, value in ((traj, lambda t: norm(traj(t))), (h, lambda t: h(t))):
            if curve is None or curve.blown_up:
                results.append(math.inf)
            else:
                results.append(max(value(t) for t in grid if t <= curve.last_time))
        return results[0], results[1]

    # Commands

    def _failure(self, scenario: ScenarioSource, command: str, error: Exception,
                 start: float, out_dir: Optional[Path] = None) -> RunResult:
        code = exit_code_for(error)
        name = str(scenario) if not isinstance(scenario, Mapping) else str(scenario.get("name", "<scenario>"))
        files = []
        if out_dir is not None:
            status_file = out_dir / "status.json"
            write_atomic(status_file, dump_json({
                "scenario": name,
                "status": "error",
                "exit_code": code,
                "message": str(error),
                "field_paths": list(getattr(error, "field_paths", [])),
            }))
            files.append(str(status_file))
        logger.debug("%s failed for %s: %s", command, name, error)
        return RunResult(scenario=name, command=command, status=f"error: {error}", exit_code=code,
                         files=files, duration=time.perf_counter() - start)

    def run_simulate(self, scenario: ScenarioSource, out_dir: Union[str, Path],
                     overrides: Optional[RunOverrides] = None) -> RunResult:
        """
        Simulate the system and the comparison equation and write trajectory.csv.

        Columns are t, g = ‖u‖, h, the Theorem-1 and Theorem-2 envelopes where
        certified, ν and σ (from t ≥ τ). A status.json beside it states whether
        the output is complete.

        Args:
            scenario: Scenario path or decoded document
            out_dir: Output directory, created if missing
            overrides: Command-line overrides

        Returns:
            RunResult with exit code 0, 3 (blow-up or step underflow) or 4 (invalid input)
        """
        start = time.perf_counter()
        out = Path(out_dir)
        try:
            loaded = self.load(scenario, overrides)
        except DelayGuardError as e:
            return self._failure(scenario, "simulate", e, start, out)

        doc, bd, problem = loaded.doc, loaded.bound, loaded.problem
        messages: List[str] = []
        radius = 1.0 + max(bd.w(t) for t in uniform_grid(-doc.tau, 0.0, doc.tau / GRID_DIVISIONS))
        growth = verify_growth_majorant(problem.G, GROWTH_SAMPLES, radius, (self.config.seed, doc.nonlinearity.seed),
                                        doc.dimension, (0.0, doc.horizon))
        if growth.violated:
            messages.append(f"‖G(t,u)‖ exceeds α(t)‖u‖^p by a factor {growth.max_ratio:.6g} at t={growth.worst_t:.6g}")

        status: List[str] = []
        traj, h = self._solve(loaded, status)
        envelopes = [self._envelope(loaded, theorem, messages) for theorem in ("T1", "T2")]
        bq = bound_quadrature(bd, loaded.quadrature)

        rows = []
        for t in uniform_grid(0.0, doc.horizon, self.output_step(loaded)):
            g = _safe(lambda s: norm(traj(s)), t) if traj is not None and t <= traj.last_time else None
            hv = _safe(h, t) if h is not None and t <= h.last_time else None
            env = [_safe(cert.bound_at, t) if cert is not None else None for cert in envelopes]
            nu = _safe(bq.nu, t)
            sig = _safe(bq.sigma, t) if t >= doc.tau else None
            rows.append([format_number(x) for x in (t, g, hv, env[0], env[1], nu, sig)])

        exit_code = EXIT_NUMERICAL if status else EXIT_OK
        trajectory_file = out / "trajectory.csv"
        status_file = out / "status.json"
        write_atomic(trajectory_file, csv_text(TRAJECTORY_COLUMNS, rows))
        write_atomic(status_file, dump_json({
            "scenario": doc.name,
            "status": "; ".join(status) or "ok",
            "complete": not status,
            "exit_code": exit_code,
            "system_last_time": traj.last_time if traj is not None else None,
            "comparison_last_time": h.last_time if h is not None else None,
            "comparison_blowup_time": h.blowup_time if h is not None else None,
            "clamped": h.clamped if h is not None else 0,
            "growth_check": growth.model_dump(),
            "messages": messages,
        }))
        return RunResult(
            scenario=doc.name,
            command="simulate",
            status="; ".join(status) or "ok",
            exit_code=exit_code,
            files=[str(trajectory_file), str(status_file)],
            messages=messages,
            duration=time.perf_counter() - start,
        )

    def run_certify(self, scenario: ScenarioSource, out_dir: Union[str, Path],
                    overrides: Optional[RunOverrides] = None) -> RunResult:
        """
        Check the scenario's certificate and write report.json.

        Returns:
            RunResult with exit code 0 (certified), 2 (not certified or
            inapplicable), 3 (numerical failure) or 4 (invalid input)
        """
        start = time.perf_counter()
        out = Path(out_dir)
        try:
            loaded = self.load(scenario, overrides)
            try:
                cert = self.certify(loaded)
            except CertificateInapplicableError as e:
                cert = self.inapplicable(loaded, e)
            longterm = self.longterm(loaded)
        except (DelayGuardError, ArithmeticError) as e:
            return self._failure(scenario, "certify", e, start, out)

        report_file = out / "report.json"
        write_atomic(report_file, dump_json({
            "scenario": loaded.doc.name,
            "theorem": cert.theorem,
            "certified": cert.certified,
            "certificate": cert.model_dump(),
            "long_term": longterm.model_dump(),
        }))
        verdicts = {verdict: bool(getattr(cert, verdict)) for verdict in VERDICTS}
        verdicts["horizon_limited"] = cert.horizon_limited
        return RunResult(
            scenario=loaded.doc.name,
            command="certify",
            status=_certificate_status(cert),
            exit_code=EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED,
            files=[str(report_file)],
            messages=list(cert.notes),
            verdicts=verdicts,
            constants=dict(cert.constants),
            duration=time.perf_counter() - start,
        )

    def run_sweep(
        self,
        scenario: ScenarioSource,
        grid: Mapping[str, Sequence[float]],
        out_dir: Union[str, Path],
        overrides: Optional[RunOverrides] = None,
        jobs: Optional[int] = None,
    ) -> RunResult:
        """
        Certify and simulate every point of a one- or two-parameter grid.

        Rows of summary.csv follow the grid order (last parameter fastest);
        a failing row records its error and the sweep continues. Each row's
        certificate goes to rows/row-NNNN.json.

        Args:
            scenario: Template scenario
            grid: Parameter name to values, for names in SWEEP_PARAMETERS
            out_dir: Output directory
            overrides: Command-line overrides applied to the template
            jobs: Worker processes; the configured sweep.jobs when omitted

        Returns:
            RunResult with exit code 0, or 4 for an invalid template or grid
        """
        start = time.perf_counter()
        out = Path(out_dir)
        names = list(grid)
        try:
            if len(names) > MAX_SWEEP_PARAMETERS:
                raise InvalidInputError(f"a sweep takes at most {MAX_SWEEP_PARAMETERS} parameters, got {len(names)}",
                                        ["param"])
            unknown = [n for n in names if n not in SWEEP_PARAMETERS]
            if unknown:
                raise InvalidInputError(f"unknown sweep parameter(s) {unknown}, expected {list(SWEEP_PARAMETERS)}",
                                        ["param"])
            data = self.read(scenario)
            if not isinstance(data, dict):
                raise ScenarioError([("", "scenario document must be a JSON object")])
            if overrides is not None:
                data = overrides.apply(data)
        except DelayGuardError as e:
            return self._failure(scenario, "sweep", e, start)

        points = list(itertools.product(*(grid[n] for n in names))) if names else []
        config_data = self.config.model_dump()
        tasks = [(i, data, dict(zip(names, point)), config_data, str(out / "rows")) for i, point in enumerate(points)]
        workers = jobs or self.config.sweep.jobs
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(sweep_row, tasks))
        else:
            rows = [sweep_row(task) for task in tasks]

        summary_file = out / "summary.csv"
        write_atomic(summary_file, csv_text(["index", *names, *SWEEP_COLUMNS], rows))
        failed = sum(1 for row in rows if row[-1].startswith("error"))
        name = data.get("name", str(scenario))
        return RunResult(
            scenario=str(name),
            command="sweep",
            status=f"{len(rows)} row(s), {failed} failed",
            files=[str(summary_file)],
            messages=[f"row {row[0]}: {row[-1]}" for row in rows if row[-1].startswith("error")],
            duration=time.perf_counter() - start,
        )

    def selftest(self, out_dir: Union[str, Path]) -> List[SelftestCheck]:
        """
        Run every bundled sample twice and compare exit codes and output bytes.

        Writes the checks to selftest.json in ``out_dir``.
        """
        out = Path(out_dir)
        checks = []
        for sample, command, expected in SELFTEST_PLAN:
            stem = Path(sample).stem
            runs = []
            for attempt in ("run-1", "run-2"):
                target = out / attempt / stem
                runner = self.run_simulate if command == "simulate" else self.run_certify
                result = runner(SAMPLES_DIR / sample, target)
                runs.append((result, _snapshot(target)))
            (first, files_a), (second, files_b) = runs
            checks.append(SelftestCheck(
                sample=sample,
                command=command,
                expected_exit=expected,
                exit_code=first.exit_code,
                deterministic=files_a == files_b and first.exit_code == second.exit_code,
            ))
        write_atomic(out / "selftest.json", dump_json([c.model_dump() | {"passed": c.passed} for c in checks]))
        return checks


def _snapshot(directory: Path) -> Dict[str, bytes]:
    if not directory.exists():
        return {}
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


SweepTask = Tuple[int, Any, Dict[str, float], Dict[str, Any], str]


def sweep_row(task: SweepTask) -> List[str]:
    """
    Evaluate one sweep grid point; runs in a worker process.

    Returns:
        The CSV row: index, parameter values, certified, slack, sup g, sup h, status
    """
    index, data, params, config_data, rows_dir = task
    guard = DelayGuard(Config(**config_data))
    values = [format_number(v) for v in params.values()]
    try:
        loaded = guard.load(apply_overrides(data, params))
        try:
            cert = guard.certify(loaded)
            status = _certificate_status(cert)
        except CertificateInapplicableError as e:
            cert = guard.inapplicable(loaded, e)
            status = "inapplicable"
        sup_g, sup_h = guard.suprema(loaded)
    except (DelayGuardError, ArithmeticError) as e:
        message = str(e).splitlines()[0]
        logger.warning("sweep row %d failed: %s", index, message)
        return [str(index), *values, "", "", "", "", f"error: {message}"]

    write_atomic(Path(rows_dir) / f"row-{index:04d}.json", dump_json({
        "index": index,
        "parameters": params,
        "certificate": cert.model_dump(),
    }))
    return [
        str(index),
        *values,
        "true" if cert.certified else "false",
        format_number(_min_slack(cert)),
        format_number(sup_g),
        format_number(sup_h),
        status,
    ]
