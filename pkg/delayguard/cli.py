"""
Command-line interface for delayguard.

Provides the typer application with the simulate, certify, sweep and
selftest commands plus init and version.
"""

import sys
from pathlib import Path
from typing import Dict, List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console

from delayguard.config import Config
from delayguard.core import DelayGuard, RunOverrides
from delayguard.errors import EXIT_INVALID, EXIT_OK, DelayGuardError, InvalidInputError, exit_code_for
from delayguard.log import setup_logging
from delayguard.reporters import JSONLReporter, Reporter, RunResult, StylishReporter

# Exit code of a failed selftest.
EXIT_SELFTEST_FAILED = 1

# Initialize CLI app
app = typer.Typer(
    name="delayguard",
    help="Simulate delay evolution equations and check their stability certificates",
    add_completion=False,
    rich_markup_mode="rich",
)

# Initialize console
console = Console(stderr=True)


def _load_config(config: Optional[Path], format: Optional[str], color: bool, verbose: bool) -> Config:
    """Load configuration and apply the reporter options."""
    cfg = Config.from_file(config) if config else (Config.find_config() or Config())
    if format is not None:
        cfg.reporter.format = format
    cfg.reporter.color = color
    cfg.reporter.verbose = verbose or cfg.reporter.verbose
    cfg = Config(**cfg.model_dump())
    setup_logging(cfg.reporter.verbose, console)
    return cfg


def _get_reporter(config: Config) -> Reporter:
    """Get appropriate reporter based on configuration."""
    if config.reporter.format == "jsonl":
        return JSONLReporter(verbose=config.reporter.verbose)
    return StylishReporter(color=config.reporter.color, verbose=config.reporter.verbose)


def _emit(config: Config, results: List[RunResult]) -> None:
    typer.echo(_get_reporter(config).report(results))


def _fail(error: Exception) -> None:
    """Print an error and exit with its code."""
    console.print(f"[red]Error: {error}[/red]", markup=True, highlight=False)
    if isinstance(error, DelayGuardError):
        sys.exit(exit_code_for(error))
    if isinstance(error, (ValidationError, ValueError, OSError)):
        sys.exit(EXIT_INVALID)
    sys.exit(1)


def parse_params(specs: List[str]) -> Dict[str, List[float]]:
    """
    Parse ``name=v1,v2,...`` sweep specifications.

    Raises:
        InvalidInputError: For a malformed specification or value
    """
    grid: Dict[str, List[float]] = {}
    for spec in specs:
        name, sep, values = spec.partition("=")
        if not sep or not name.strip():
            raise InvalidInputError(f"expected name=v1,v2,... but got '{spec}'", ["param"])
        try:
            grid[name.strip()] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError as e:
            raise InvalidInputError(f"invalid value in '{spec}': {e}", ["param"]) from e
    return grid


ScenarioOption = typer.Option(..., "--scenario", "-s", help="Scenario JSON file")
OutOption = typer.Option(Path("out"), "--out", "-o", help="Output directory")
HorizonOption = typer.Option(None, "--horizon", help="Override the scenario horizon")
TolOption = typer.Option(None, "--tol", help="Relative tolerance of the integrator and quadrature")
GridStepOption = typer.Option(None, "--grid-step", help="Output and supremum grid step")
SeedOption = typer.Option(None, "--seed", help="Seed for sharp_power rotations and growth sampling")
FormatOption = typer.Option(None, "--format", "-f", help="Output format (stylish, jsonl)")
ColorOption = typer.Option(True, "--color/--no-color", help="Enable/disable colored output")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Verbose output")
ConfigOption = typer.Option(None, "--config", "-c", help="Configuration file path")


@app.command()
def simulate(
    scenario: Path = ScenarioOption,
    out: Path = OutOption,
    horizon: Optional[float] = HorizonOption,
    tol: Optional[float] = TolOption,
    grid_step: Optional[float] = GridStepOption,
    seed: Optional[int] = SeedOption,
    format: Optional[str] = FormatOption,
    color: bool = ColorOption,
    verbose: bool = VerboseOption,
    config: Optional[Path] = ConfigOption,
) -> None:
    """Simulate a scenario and write trajectory.csv."""
    try:
        cfg = _load_config(config, format, color, verbose)
        overrides = RunOverrides(horizon=horizon, tol=tol, grid_step=grid_step, seed=seed)
        result = DelayGuard(config=cfg).run_simulate(scenario, out, overrides)
        _emit(cfg, [result])
    except Exception as e:
        _fail(e)
    sys.exit(result.exit_code)


@app.command()
def certify(
    scenario: Path = ScenarioOption,
    out: Path = OutOption,
    horizon: Optional[float] = HorizonOption,
    tol: Optional[float] = TolOption,
    grid_step: Optional[float] = GridStepOption,
    seed: Optional[int] = SeedOption,
    format: Optional[str] = FormatOption,
    color: bool = ColorOption,
    verbose: bool = VerboseOption,
    config: Optional[Path] = ConfigOption,
) -> None:
    """Check the scenario's stability certificate and write report.json."""
    try:
        cfg = _load_config(config, format, color, verbose)
        overrides = RunOverrides(horizon=horizon, tol=tol, grid_step=grid_step, seed=seed)
        result = DelayGuard(config=cfg).run_certify(scenario, out, overrides)
        _emit(cfg, [result])
    except Exception as e:
        _fail(e)
    sys.exit(result.exit_code)


@app.command()
def sweep(
    scenario: Path = ScenarioOption,
    param: List[str] = typer.Option([], "--param", "-p", help="Swept parameter as name=v1,v2,... (at most two)"),
    out: Path = OutOption,
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    horizon: Optional[float] = HorizonOption,
    tol: Optional[float] = TolOption,
    grid_step: Optional[float] = GridStepOption,
    seed: Optional[int] = SeedOption,
    format: Optional[str] = FormatOption,
    color: bool = ColorOption,
    verbose: bool = VerboseOption,
    config: Optional[Path] = ConfigOption,
) -> None:
    """Certify and simulate a scenario over a parameter grid and write summary.csv."""
    try:
        cfg = _load_config(config, format, color, verbose)
        overrides = RunOverrides(horizon=horizon, tol=tol, grid_step=grid_step, seed=seed)
        result = DelayGuard(config=cfg).run_sweep(scenario, parse_params(param), out, overrides, jobs)
        _emit(cfg, [result])
    except Exception as e:
        _fail(e)
    sys.exit(result.exit_code)


@app.command()
def selftest(
    out: Path = typer.Option(Path("selftest-out"), "--out", "-o", help="Output directory"),
    format: Optional[str] = FormatOption,
    color: bool = ColorOption,
    verbose: bool = VerboseOption,
    config: Optional[Path] = ConfigOption,
) -> None:
    """Run the bundled samples twice and verify exit codes and byte-identical outputs."""
    try:
        cfg = _load_config(config, format, color, verbose)
        checks = DelayGuard(config=cfg).selftest(out)
        results = []
        for check in checks:
            if check.passed:
                status = "pass"
            elif check.exit_code != check.expected_exit:
                status = f"fail: expected exit {check.expected_exit}, got {check.exit_code}"
            else:
                status = "fail: outputs differ between runs"
            results.append(RunResult(
                scenario=check.sample,
                command=f"selftest {check.command}",
                status=status,
                exit_code=EXIT_OK if check.passed else EXIT_SELFTEST_FAILED,
            ))
        _emit(cfg, results)
    except Exception as e:
        _fail(e)
    sys.exit(EXIT_OK if all(check.passed for check in checks) else EXIT_SELFTEST_FAILED)


@app.command()
def init(
    path: Path = typer.Argument(Path("."), help="Directory to initialize"),
    rtol: float = typer.Option(1e-9, "--rtol", help="Default integrator relative tolerance"),
    jobs: int = typer.Option(1, "--jobs", "-j", min=1, help="Default sweep worker processes"),
    format: str = typer.Option("stylish", "--format", "-f", help="Default output format"),
) -> None:
    """Initialize delayguard configuration in a directory."""
    try:
        cfg = Config(reporter={"format": format}, solver={"rtol": rtol}, sweep={"jobs": jobs})

        config_file = path / ".delayguard.toml"
        cfg.save(config_file)

        console.print(f"[green]✅ Created configuration file: {config_file}[/green]")

        console.print("\n[bold]Configuration:[/bold]")
        console.print(f"  Integrator rtol: {cfg.solver.rtol}")
        console.print(f"  Sweep jobs: {cfg.sweep.jobs}")
        console.print(f"  Output format: {cfg.reporter.format}")

    except Exception as e:
        _fail(e)


@app.command()
def version() -> None:
    """Show delayguard version information."""
    from delayguard import __version__

    console.print(f"[bold blue]delayguard v{__version__}[/bold blue]")
    console.print("Simulate delay evolution equations and check their stability certificates")


def main() -> None:
    """Main entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
