"""Configuration module for the TILT solver."""
import os
import logging
from dataclasses import dataclass, field, asdict, replace
from typing import Dict, Any, Optional, Tuple
import dotenv

from tilt_solver.models import SolverKind, ConstraintMode, TransformKind

# Load environment variables from .env file if present
dotenv.load_dotenv()

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _env_float(name: str, default: Optional[float]) -> Optional[float]:
    value = os.environ.get(name)
    if value is None or value == "":
        return default
    return float(value)


def _env_bool(name: str, default: bool) -> bool:
    return os.environ.get(name, str(default)).lower() == "true"


@dataclass
class SolverOptions:
    """Configuration for one inner-loop solve."""
    solver_kind: SolverKind = SolverKind.LADMAP

    # Penalty schedule; None means derived from the data (see inner_solver)
    # crit2 on unit-norm patches stays O(0.1) while E is absorbed, hence the loose eps2
    mu0: Optional[float] = None
    mu_max: Optional[float] = None
    rho0: float = 2.5
    adm_rho: float = 1.25

    # Stopping tolerances
    eps1: float = 1e-7
    eps2: float = 0.5
    max_inner_iters: int = 1000

    # Warm-start SVD gate, relative to ||M_k||_F
    eps_svd: float = 1e-2
    svd_warm_steps: int = 1

    # Linearization constants of the A and E steps
    eta_a: float = 1.0
    eta_b: float = 1.0

    divergence_limit: float = 1e12

    def __post_init__(self):
        self.solver_kind = SolverKind(self.solver_kind)
        if self.rho0 < 1.0:
            raise ValueError(f"rho0 must be >= 1, got {self.rho0}")
        if self.adm_rho < 1.0:
            raise ValueError(f"adm_rho must be >= 1, got {self.adm_rho}")
        for name in ("eps1", "eps2", "eps_svd", "eta_a", "eta_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mu0 is not None and self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if self.mu_max is not None and self.mu_max <= 0:
            raise ValueError("mu_max must be positive")
        if self.mu0 is not None and self.mu_max is not None and self.mu_max < self.mu0:
            raise ValueError(f"mu_max ({self.mu_max}) must be >= mu0 ({self.mu0})")
        if self.max_inner_iters < 1 or self.svd_warm_steps < 1:
            raise ValueError("Iteration counts must be at least 1")

    @classmethod
    def from_env(cls) -> 'SolverOptions':
        """Create solver options from environment variables."""
        return cls(
            solver_kind=SolverKind(os.environ.get("TILT_SOLVER_KIND", "ladmap")),
            mu0=_env_float("TILT_MU0", None),
            mu_max=_env_float("TILT_MU_MAX", None),
            rho0=float(os.environ.get("TILT_RHO0", "2.5")),
            adm_rho=float(os.environ.get("TILT_ADM_RHO", "1.25")),
            eps1=float(os.environ.get("TILT_EPS1", "1e-7")),
            eps2=float(os.environ.get("TILT_EPS2", "0.5")),
            max_inner_iters=int(os.environ.get("TILT_MAX_INNER_ITERS", "1000")),
            eps_svd=float(os.environ.get("TILT_EPS_SVD", "1e-2")),
            svd_warm_steps=int(os.environ.get("TILT_SVD_WARM_STEPS", "1")),
            eta_a=float(os.environ.get("TILT_ETA_A", "1.0")),
            eta_b=float(os.environ.get("TILT_ETA_B", "1.0")),
            divergence_limit=float(os.environ.get("TILT_DIVERGENCE_LIMIT", "1e12")),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert the options to a JSON-friendly dictionary."""
        data = asdict(self)
        data["solver_kind"] = self.solver_kind.value
        return data


@dataclass
class OuterOptions:
    """Configuration for a full rectification run."""
    max_outer_iters: int = 50
    tau_tol: float = 1e-4
    lambda_scale: float = 1.0
    constraint_mode: ConstraintMode = ConstraintMode.CENTER_AREA
    transform_kind: TransformKind = TransformKind.AFFINE
    warm_start: bool = True
    jacobian_gradient: str = "bilinear"
    inner: SolverOptions = field(default_factory=SolverOptions)

    # Logging settings
    log_level: int = logging.INFO
    log_format: str = DEFAULT_LOG_FORMAT
    log_file: Optional[str] = None
    show_progress: bool = True

    def __post_init__(self):
        self.constraint_mode = ConstraintMode(self.constraint_mode)
        self.transform_kind = TransformKind(self.transform_kind)
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.tau_tol <= 0 or self.lambda_scale <= 0:
            raise ValueError("tau_tol and lambda_scale must be positive")
        if self.jacobian_gradient not in ("bilinear", "central"):
            raise ValueError(f"Unknown Jacobian gradient mode: {self.jacobian_gradient}")

    @classmethod
    def from_env(cls) -> 'OuterOptions':
        """Create outer-loop options from environment variables."""
        return cls(
            max_outer_iters=int(os.environ.get("TILT_MAX_OUTER_ITERS", "50")),
            tau_tol=float(os.environ.get("TILT_TAU_TOL", "1e-4")),
            lambda_scale=float(os.environ.get("TILT_LAMBDA_SCALE", "1.0")),
            constraint_mode=ConstraintMode(os.environ.get("TILT_CONSTRAINT_MODE", "center_area")),
            transform_kind=TransformKind(os.environ.get("TILT_TRANSFORM_KIND", "affine")),
            warm_start=_env_bool("TILT_WARM_START", True),
            jacobian_gradient=os.environ.get("TILT_JACOBIAN_GRADIENT", "bilinear"),
            inner=SolverOptions.from_env(),
            log_level=getattr(logging, os.environ.get("TILT_LOG_LEVEL", "INFO")),
            log_format=os.environ.get("TILT_LOG_FORMAT", DEFAULT_LOG_FORMAT),
            log_file=os.environ.get("TILT_LOG_FILE"),
            show_progress=_env_bool("TILT_SHOW_PROGRESS", True),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert the options to a JSON-friendly dictionary."""
        return {
            "max_outer_iters": self.max_outer_iters,
            "tau_tol": self.tau_tol,
            "lambda_scale": self.lambda_scale,
            "constraint_mode": self.constraint_mode.value,
            "transform_kind": self.transform_kind.value,
            "warm_start": self.warm_start,
            "jacobian_gradient": self.jacobian_gradient,
            "inner": self.inner.to_dict(),
            "log_level": self.log_level,
            "log_file": self.log_file,
            "show_progress": self.show_progress,
        }

    @property
    def solver_name(self) -> str:
        return solver_name(self.inner.solver_kind, self.warm_start)

    def with_solver(self, name: str) -> 'OuterOptions':
        """Copy of these options running the named solver."""
        kind, warm_start = parse_solver_name(name)
        return replace(self, warm_start=warm_start, inner=replace(self.inner, solver_kind=kind))


def configure_logging(config: OuterOptions) -> None:
    """Configure logging based on the configuration."""
    handlers = []

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(config.log_format))
    handlers.append(console_handler)

    # File handler if log file specified
    if config.log_file:
        file_handler = logging.FileHandler(config.log_file)
        file_handler.setFormatter(logging.Formatter(config.log_format))
        handlers.append(file_handler)

    # Configure root logger
    logging.basicConfig(
        level=config.log_level,
        handlers=handlers,
        format=config.log_format,
        force=True,
    )


# CLI solver names: (inner algorithm, variable warm start)
SOLVER_NAMES: Dict[str, Tuple[SolverKind, bool]] = {
    "adm": (SolverKind.ADM, False),
    "ladmap": (SolverKind.LADMAP, False),
    "ladmap-vws": (SolverKind.LADMAP, True),
    "ladmap-svdws": (SolverKind.LADMAP_SVDWS, False),
    "ladmap-vws-svdws": (SolverKind.LADMAP_SVDWS, True),
}


def parse_solver_name(name: str) -> Tuple[SolverKind, bool]:
    """Map a CLI solver name to (solver kind, warm_start)."""
    try:
        return SOLVER_NAMES[name.lower()]
    except KeyError:
        raise ValueError(f"Unknown solver {name!r}; choose from {', '.join(SOLVER_NAMES)}") from None


def solver_name(kind: SolverKind, warm_start: bool) -> str:
    """Inverse of :func:`parse_solver_name`; ADM never warm-starts."""
    kind = SolverKind(kind)
    if kind is SolverKind.ADM:
        return "adm"
    suffix = "-svdws" if kind is SolverKind.LADMAP_SVDWS else ""
    return f"ladmap{'-vws' if warm_start else ''}{suffix}"
