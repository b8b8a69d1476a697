"""Domain types shared by the TILT solver modules."""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np


class SolverKind(str, Enum):
    """Inner-loop algorithm."""
    ADM = "adm"
    LADMAP = "ladmap"
    LADMAP_SVDWS = "ladmap-svdws"


class StopReason(str, Enum):
    """Why an inner solve returned."""
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


class TransformKind(str, Enum):
    """Warp family; the value doubles as the JSON/CSV label."""
    AFFINE = "affine"
    PROJECTIVE = "projective"

    @property
    def n_params(self) -> int:
        return 6 if self is TransformKind.AFFINE else 8


class ConstraintMode(str, Enum):
    """Side constraints on the transform increment."""
    NONE = "none"
    CENTER_AREA = "center_area"


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD factors U * diag(sigma) * V^T.

    For a tall m x n matrix U is m x n and V is n x n. Entries of sigma may be
    negative once factors have been moved by a warm-start step.
    """
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return the matrix the factors represent."""
        return (self.u * self.sigma) @ self.v.T

    def transpose(self) -> "SvdFactors":
        """Factors of the transposed matrix."""
        return SvdFactors(u=self.v, sigma=self.sigma, v=self.u)


@dataclass(frozen=True)
class JacobianMatrix:
    """Derivative of the vectorized normalized patch w.r.t. the transform parameters.

    Rows follow the column-major (Fortran) flattening of the m x n patch.
    """
    data: np.ndarray
    shape: Tuple[int, int]

    def __post_init__(self):
        m, n = self.shape
        if self.data.ndim != 2 or self.data.shape[0] != m * n:
            raise ValueError(
                f"Jacobian has {self.data.shape} rows/cols, expected {m * n} rows for a {m}x{n} patch"
            )

    @property
    def p(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ConstraintMatrix:
    """Linearized side constraints Q * dtau = 0 (l x p)."""
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("Constraint matrix must be two-dimensional")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("Constraint matrix contains non-finite entries")


@dataclass
class InnerState:
    """Iterates carried between inner solves by the variable warm start."""
    a: np.ndarray
    e: np.ndarray
    y_tilde: np.ndarray  # multiplier stored pre-multiplied by W^T
    mu: float
    k: int = 0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.a.shape


class StopCheck(NamedTuple):
    """Outcome of the KKT-based stopping test."""
    stop: bool
    crit1: float
    crit2: float


@dataclass
class SolveReport:
    """Per-solve diagnostics used by the experiment tables."""
    solver: str
    iterations: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERS
    objective_trace: List[float] = field(default_factory=list)
    constraint_trace: List[float] = field(default_factory=list)
    mu_trace: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    full_svd_count: int = 0
    warm_svd_count: int = 0
    projector_applications: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else 0.0

    @property
    def converged(self) -> bool:
        return self.stop_reason is StopReason.CONVERGED


@dataclass(frozen=True)
class TransformParams:
    """Parameter vector of an affine or projective warp.

    Order: a11, a12, a21, a22, tx, ty (+ h31, h32 for projective). The lower
    right entry of the 3x3 matrix is fixed to 1.
    """
    kind: TransformKind
    params: np.ndarray

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float).reshape(-1)
        if params.size != self.kind.n_params:
            raise ValueError(
                f"{self.kind.value} transform needs {self.kind.n_params} parameters, got {params.size}"
            )
        object.__setattr__(self, "params", params)

    @classmethod
    def identity(cls, kind: TransformKind = TransformKind.AFFINE) -> "TransformParams":
        params = np.zeros(kind.n_params)
        params[0] = params[3] = 1.0
        return cls(kind, params)

    def __add__(self, delta: np.ndarray) -> "TransformParams":
        return TransformParams(self.kind, self.params + np.asarray(delta, dtype=float))

    def to_list(self) -> List[float]:
        return [float(x) for x in self.params]


@dataclass(frozen=True)
class WindowSpec:
    """Rectangular window in source-image pixels."""
    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"Window must be at least 2x2 pixels, got {self.width}x{self.height}")

    @classmethod
    def parse(cls, text: str) -> "WindowSpec":
        """Parse the CLI form "x,y,w,h"."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"Window must be given as x,y,w,h, got {text!r}")
        x0, y0, width, height = (int(p) for p in parts)
        return cls(x0, y0, width, height)

    @classmethod
    def centered(cls, image_shape: Tuple[int, int], width: int, height: int) -> "WindowSpec":
        """Window of the given size centred in an image of shape (rows, cols)."""
        rows, cols = image_shape
        return cls((cols - width) // 2, (rows - height) // 2, width, height)

    @property
    def shape(self) -> Tuple[int, int]:
        """Patch shape (rows, cols)."""
        return self.height, self.width

    @property
    def center(self) -> Tuple[float, float]:
        """Centre (x, y) in image coordinates."""
        return self.x0 + (self.width - 1) / 2.0, self.y0 + (self.height - 1) / 2.0

    def to_list(self) -> List[int]:
        return [self.x0, self.y0, self.width, self.height]


@dataclass
class TiltResult:
    """Output of the outer loop."""
    a_star: Optional[np.ndarray]
    e_star: Optional[np.ndarray]
    tau_star: TransformParams
    outer_iters: int = 0
    inner_reports: List[SolveReport] = field(default_factory=list)
    total_time: float = 0.0
    converged: bool = False
    tau_history: List[TransformParams] = field(default_factory=list)
    objective_history: List[float] = field(default_factory=list)
    norm_factors: List[float] = field(default_factory=list)

    @property
    def inner_iterations(self) -> int:
        return sum(r.iterations for r in self.inner_reports)


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image with intensities in [0, 1], indexed [row, col]."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        if pixels.ndim != 2:
            raise ValueError(f"Gray image must be 2-D, got shape {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("Image contains non-finite intensities")
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class CorruptionSpec:
    """Fraction of pixels to replace with uniform noise, and the RNG seed."""
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"Corruption fraction must lie in [0, 1], got {self.fraction}")


@dataclass
class CorpusCase:
    """A texture image with its annotated window and optional ground truth."""
    name: str
    image: GrayImage
    window: WindowSpec
    tau0: TransformParams
    ground_truth: Optional[TransformParams] = None

    def to_sidecar(self) -> dict:
        """JSON sidecar stored next to the PNG."""
        return {
            "window": self.window.to_list(),
            "kind": self.tau0.kind.value,
            "tau0": self.tau0.to_list(),
            "ground_truth": self.ground_truth.to_list() if self.ground_truth is not None else None,
        }


@dataclass
class BenchRow:
    """One line of the inner-loop benchmark table."""
    size: int
    solver: str
    mean_time_s: float
    mean_iters: float
    mean_objective: float
    trials: int
