"""Validated run configuration for the command-line tools.

Values are merged with the precedence CLI flags > config file > ``TILT_*``
environment > built-in defaults. Option fields left as ``None`` fall through
to :meth:`OuterOptions.from_env`, which supplies the environment and default
layers.
"""
import json
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tilt_solver import __version__
from tilt_solver.config.config import SOLVER_NAMES, OuterOptions, parse_solver_name
from tilt_solver.imaging import RNG_ALGORITHM
from tilt_solver.models import ConstraintMode, TransformKind, WindowSpec

Command = Literal["rectify", "bench-inner", "range", "corruption", "speed"]


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    """Effective settings of one CLI invocation."""
    model_config = ConfigDict(extra="forbid")

    command: Command
    seed: int = 0
    out: Optional[str] = None
    input: Optional[str] = None
    corpus: Optional[str] = None
    window: Optional[str] = None
    jobs: int = Field(default=1, ge=1)
    rel_err_tol: float = Field(default=0.05, gt=0)
    verbose: bool = False
    quiet: bool = False
    log_file: Optional[str] = None

    # experiment sweeps
    sizes: Optional[List[int]] = None
    trials: Optional[int] = Field(default=None, ge=1)
    levels: Optional[List[float]] = None
    theta_steps: Optional[int] = Field(default=None, ge=1)
    t_steps: Optional[int] = Field(default=None, ge=1)
    solvers: Optional[List[str]] = None

    # outer loop overrides
    solver: Optional[str] = None
    kind: Optional[TransformKind] = None
    constraints: Optional[ConstraintMode] = None
    max_outer_iters: Optional[int] = Field(default=None, ge=1)
    tau_tol: Optional[float] = Field(default=None, gt=0)
    lambda_scale: Optional[float] = Field(default=None, gt=0)
    jacobian_gradient: Optional[Literal["bilinear", "central"]] = None

    # inner solver overrides
    mu0: Optional[float] = Field(default=None, gt=0)
    mu_max: Optional[float] = Field(default=None, gt=0)
    rho0: Optional[float] = Field(default=None, ge=1)
    adm_rho: Optional[float] = Field(default=None, ge=1)
    eps1: Optional[float] = Field(default=None, gt=0)
    eps2: Optional[float] = Field(default=None, gt=0)
    eps_svd: Optional[float] = Field(default=None, gt=0)
    max_inner_iters: Optional[int] = Field(default=None, ge=1)
    eta_a: Optional[float] = Field(default=None, gt=0)
    eta_b: Optional[float] = Field(default=None, gt=0)
    svd_warm_steps: Optional[int] = Field(default=None, ge=1)
    divergence_limit: Optional[float] = Field(default=None, gt=0)

    @field_validator("sizes", "levels", "solvers", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _split_list(value)

    @field_validator("levels")
    @classmethod
    def check_levels(cls, value):
        if value is not None and any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError("corruption levels must lie in [0, 1]")
        return value

    @field_validator("sizes")
    @classmethod
    def check_sizes(cls, value):
        if value is not None and any(v < 2 for v in value):
            raise ValueError("benchmark sizes must be at least 2")
        return value

    @field_validator("solver")
    @classmethod
    def check_solver(cls, value):
        if value is not None:
            parse_solver_name(value)
        return value

    @field_validator("solvers")
    @classmethod
    def check_solvers(cls, value):
        for name in value or []:
            if name not in SOLVER_NAMES:
                raise ValueError(f"unknown solver {name!r}")
        return value

    @field_validator("window")
    @classmethod
    def check_window(cls, value):
        if value is not None:
            WindowSpec.parse(value)
        return value

    @model_validator(mode="after")
    def check_penalty_range(self):
        if self.mu0 is not None and self.mu_max is not None and self.mu_max < self.mu0:
            raise ValueError(f"mu_max ({self.mu_max}) must be >= mu0 ({self.mu0})")
        return self

    @property
    def window_spec(self) -> Optional[WindowSpec]:
        return WindowSpec.parse(self.window) if self.window is not None else None

    def to_outer_options(self) -> OuterOptions:
        """OuterOptions with this config's overrides applied over the environment."""
        base = OuterOptions.from_env()
        inner_fields = (
            "mu0", "mu_max", "rho0", "adm_rho", "eps1", "eps2", "eps_svd", "max_inner_iters",
            "eta_a", "eta_b", "svd_warm_steps", "divergence_limit",
        )
        inner = replace(base.inner, **{k: getattr(self, k) for k in inner_fields if getattr(self, k) is not None})
        outer: Dict[str, Any] = {
            "max_outer_iters": self.max_outer_iters,
            "tau_tol": self.tau_tol,
            "lambda_scale": self.lambda_scale,
            "jacobian_gradient": self.jacobian_gradient,
            "transform_kind": self.kind,
            "constraint_mode": self.constraints,
            "log_file": self.log_file,
        }
        options = replace(base, inner=inner, **{k: v for k, v in outer.items() if v is not None})
        if self.verbose:
            options.log_level = logging.DEBUG
        options.show_progress = not self.quiet
        return options.with_solver(self.solver) if self.solver is not None else options

    def echo(self, out_dir: Union[str, Path]) -> Path:
        """Write the effective configuration as ``config.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = ConfigEcho(
            version=__version__, rng=RNG_ALGORITHM, config=self, options=self.to_outer_options().to_dict(),
        )
        path = out_dir / "config.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload.model_dump(mode="json"), f, indent=2, sort_keys=True)
        return path


class ConfigEcho(BaseModel):
    """Schema of config.json."""
    model_config = ConfigDict(extra="forbid")

    version: str
    rng: str
    config: RunConfig
    options: Dict[str, Any]


def read_config_file(path: Union[str, Path]) -> Dict[str, Optional[str]]:
    """Parse a dotenv-style key=value file; keys are normalized to field names."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv.dotenv_values(path)
    return {key.lower().replace("-", "_"): value for key, value in values.items()}


def load_run_config(
    command: str, cli_values: Dict[str, Any], config_file: Optional[Union[str, Path]] = None
) -> RunConfig:
    """Merge config-file values under the CLI flags and validate.

    ``None`` CLI values mean "not given" and do not override the file. The
    ``TILT_SEED`` environment variable is read only when neither sets a seed.

    Raises:
        pydantic.ValidationError: on unknown keys or invalid values
        FileNotFoundError: if ``config_file`` does not exist
    """
    values: Dict[str, Any] = {}
    if config_file is not None:
        values.update({k: v for k, v in read_config_file(config_file).items() if v is not None})
    values.update({k: v for k, v in cli_values.items() if v is not None})
    values.pop("command", None)
    if "seed" not in values and os.environ.get("TILT_SEED"):
        values["seed"] = os.environ["TILT_SEED"]
    return RunConfig(command=command, **values)
