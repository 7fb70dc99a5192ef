"""
Configuration management for delayguard.

Handles loading and validation of tool defaults from .delayguard.toml or
.delayguard.yml files. Scenario files refine these per run and CLI flags
override both.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import tomli
import tomli_w
import yaml
from pydantic import BaseModel, Field, field_validator

from delayguard.quadrature import QuadratureSettings
from delayguard.steps import StepControl

logger = logging.getLogger(__name__)

CONFIG_NAMES = [".delayguard.toml", ".delayguard.yml", "delayguard.toml", "delayguard.yml"]
REPORTER_FORMATS = ["stylish", "jsonl"]


class QuadratureConfig(BaseModel):
    """Configuration for adaptive quadrature."""

    abs_tol: float = Field(default=1e-10, gt=0.0, description="Absolute tolerance per integral")
    rel_tol: float = Field(default=1e-8, gt=0.0, description="Relative tolerance per integral")
    max_subdivisions: int = Field(default=200, ge=1, description="Panel subdivision limit")
    grid_step: Optional[float] = Field(default=None, gt=0.0, description="Grid step for suprema; τ/50 when unset")


class SolverConfig(BaseModel):
    """Configuration for the method-of-steps integrator."""

    rtol: float = Field(default=1e-9, gt=0.0, description="Relative tolerance")
    atol: float = Field(default=1e-12, gt=0.0, description="Absolute tolerance")
    first_step: Optional[float] = Field(default=None, gt=0.0, description="Initial step size")
    max_step: Optional[float] = Field(default=None, gt=0.0, description="Largest step; τ/64 when unset")


class ReporterConfig(BaseModel):
    """Configuration for console reporting."""

    format: str = Field(default="stylish", description="Output format (stylish, jsonl)")
    color: bool = Field(default=True, description="Enable colored output")
    verbose: bool = Field(default=False, description="Verbose output")


class SweepConfig(BaseModel):
    """Configuration for parameter sweeps."""

    jobs: int = Field(default=1, ge=1, description="Worker processes for sweep rows")


class OutputConfig(BaseModel):
    """Configuration for written files."""

    grid_step: Optional[float] = Field(default=None, gt=0.0, description="Sampling step of trajectory.csv")


class Config(BaseModel):
    """Main delayguard configuration."""

    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    reporter: ReporterConfig = Field(default_factory=ReporterConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    seed: int = Field(default=0, ge=0, description="Seed for the growth-majorant sampling, combined with the scenario seed")

    @field_validator("reporter")
    @classmethod
    def validate_reporter_format(cls, v: ReporterConfig) -> ReporterConfig:
        """Validate reporter format."""
        if v.format not in REPORTER_FORMATS:
            raise ValueError(f"Invalid reporter format: {v.format}. Must be one of {REPORTER_FORMATS}")
        return v

    @classmethod
    def from_file(cls, config_path: Union[str, Path]) -> "Config":
        """Load configuration from a TOML or YAML file."""
        config_path = Path(config_path)

        if not config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        if config_path.suffix in [".yml", ".yaml"]:
            with open(config_path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        else:
            with open(config_path, "rb") as f:
                data = tomli.load(f)

        return cls(**data)

    @classmethod
    def find_config(cls, start_path: Union[str, Path] = ".") -> Optional["Config"]:
        """Find and load the nearest configuration file walking up from start_path."""
        start_path = Path(start_path).resolve()

        for path in [start_path] + list(start_path.parents):
            for config_name in CONFIG_NAMES:
                config_file = path / config_name
                if config_file.exists():
                    try:
                        return cls.from_file(config_file)
                    except Exception as e:
                        logger.warning("failed to load config from %s: %s", config_file, e)
                        continue

        return None

    def save(self, config_path: Union[str, Path]) -> None:
        """Save configuration to a TOML file. Unset optional values are omitted."""
        with open(Path(config_path), "wb") as f:
            tomli_w.dump(self.model_dump(exclude_none=True), f)

    def quadrature_settings(self) -> QuadratureSettings:
        return QuadratureSettings(
            abs_tol=self.quadrature.abs_tol,
            rel_tol=self.quadrature.rel_tol,
            max_subdivisions=self.quadrature.max_subdivisions,
        )

    def step_control(self) -> StepControl:
        return StepControl(**self.solver.model_dump())
