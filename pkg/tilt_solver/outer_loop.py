"""Outer rectification loop: linearize, solve the inner program, update tau."""
import logging
import time
from typing import Optional, Tuple

import numpy as np

from tilt_solver.config.config import OuterOptions
from tilt_solver.errors import DegenerateWindowError, SingularJacobianError, TiltError
from tilt_solver.imaging import check_bounds, local_grid, sample, sample_gradients, warp_coordinates
from tilt_solver.inner_solver import InnerProblem, solve_adm, solve_ladmap
from tilt_solver.models import (
    ConstraintMatrix, ConstraintMode, GrayImage, InnerState, JacobianMatrix, SolverKind, TiltResult,
    TransformParams, WindowSpec,
)
from tilt_solver.projector import Projector
from tilt_solver.transforms import is_invertible, map_points, point_derivatives, promote

logger = logging.getLogger("tilt_solver")

# Interpolation margin required around the warped window while linearizing
JACOBIAN_MARGIN = 1.0
CONSTRAINT_STEP = 1e-6


def normalize_patch(patch: np.ndarray) -> Tuple[np.ndarray, float]:
    """Scale a patch to unit Frobenius norm.

    Raises:
        DegenerateWindowError: if the patch is identically zero
    """
    patch = np.asarray(patch, dtype=float)
    norm = float(np.linalg.norm(patch))
    if norm == 0.0:
        raise DegenerateWindowError("Sampled patch is all zeros and cannot be normalized")
    return patch / norm, norm


def linearize(
    image: GrayImage, tau: TransformParams, window: WindowSpec, gradient: str = "bilinear"
) -> Tuple[np.ndarray, float, JacobianMatrix]:
    """Normalized warped patch, its norm, and the Jacobian of the normalized patch.

    With I(tau) the raw patch and D = I/||I||, each column of J is
    (dI - D <D, dI>) / ||I||, where dI = g_x dx/dtau + g_y dy/dtau is taken
    through the bilinear sampler.

    Raises:
        WindowEscapeError: if the warped window (plus margin) leaves the image
        DegenerateWindowError: if the patch is all zeros
        SingularJacobianError: if J is not of full column rank
    """
    if not is_invertible(tau):
        raise DegenerateWindowError("Transform matrix is singular")
    x, y = warp_coordinates(tau, window)
    check_bounds(x, y, image.pixels.shape, JACOBIAN_MARGIN)
    patch = sample(image.pixels, x, y)
    d, norm = normalize_patch(patch)

    # column-major point order, matching the patch vectorization
    u, v = local_grid(window)
    gx, gy = sample_gradients(image.pixels, x.ravel(order="F"), y.ravel(order="F"), gradient)
    dx, dy = point_derivatives(tau, u.ravel(order="F"), v.ravel(order="F"))
    d_raw = gx[:, None] * dx + gy[:, None] * dy
    d_vec = d.ravel(order="F")
    data = (d_raw - np.outer(d_vec, d_vec @ d_raw)) / norm

    rank = np.linalg.matrix_rank(data)
    if rank < data.shape[1]:
        raise SingularJacobianError(
            f"Jacobian has rank {rank} < {data.shape[1]}; the window lacks texture in some direction"
        )
    return d, norm, JacobianMatrix(data=data, shape=window.shape)


def compute_jacobian(
    image: GrayImage, tau: TransformParams, window: WindowSpec, gradient: str = "bilinear"
) -> JacobianMatrix:
    """Jacobian of the vectorized normalized patch w.r.t. the transform parameters."""
    return linearize(image, tau, window, gradient)[2]


def window_geometry(tau: TransformParams, window: WindowSpec) -> np.ndarray:
    """(centre x, centre y, area) of the warped window outline, in local coordinates."""
    half_w, half_h = (window.width - 1) / 2.0, (window.height - 1) / 2.0
    u = np.array([-half_w, half_w, half_w, -half_w])
    v = np.array([-half_h, -half_h, half_h, half_h])
    x, y = map_points(tau, u, v)
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return np.array([x.mean(), y.mean(), area])


def build_constraints_q(tau: TransformParams, window: WindowSpec, step: float = CONSTRAINT_STEP) -> ConstraintMatrix:
    """Linearized centre and area constraints, one unit-norm row each."""
    rows = np.zeros((3, tau.params.size))
    for j in range(tau.params.size):
        delta = np.zeros(tau.params.size)
        delta[j] = step
        rows[:, j] = (window_geometry(tau + delta, window) - window_geometry(tau + (-delta), window)) / (2 * step)
    norms = np.linalg.norm(rows, axis=1)
    norms[norms == 0.0] = 1.0
    return ConstraintMatrix(rows / norms[:, None])


class TiltRectifier:
    """Runs the outer loop for one image window."""

    def __init__(self, options: Optional[OuterOptions] = None):
        self.options = options or OuterOptions()
        self.logger = logging.getLogger("tilt_solver")

    def run(self, image: GrayImage, window: WindowSpec, tau0: Optional[TransformParams] = None) -> TiltResult:
        """Rectify ``window`` starting from ``tau0``.

        Raises:
            TiltError: any solver failure, with the partial TiltResult attached
        """
        opts = self.options
        tau = promote(tau0 or TransformParams.identity(opts.transform_kind), opts.transform_kind)
        result = TiltResult(a_star=None, e_star=None, tau_star=tau, tau_history=[tau])
        started = time.perf_counter()
        self.logger.info(
            f"Rectifying window {window.to_list()} with {opts.solver_name} "
            f"({opts.transform_kind.value}, constraints={opts.constraint_mode.value})"
        )
        try:
            self._iterate(image, window, tau, result)
        except TiltError as err:
            result.total_time = time.perf_counter() - started
            err.result = result
            self.logger.error(f"Rectification failed after {result.outer_iters} outer iterations: {err}")
            raise
        result.total_time = time.perf_counter() - started
        self.logger.info(
            f"Finished in {result.outer_iters} outer iterations ({result.inner_iterations} inner), "
            f"converged={result.converged}, {result.total_time:.3f}s"
        )
        return result

    def _iterate(self, image: GrayImage, window: WindowSpec, tau: TransformParams, result: TiltResult) -> None:
        opts = self.options
        lam = opts.lambda_scale / np.sqrt(max(window.shape))
        state: Optional[InnerState] = None

        for i in range(opts.max_outer_iters):
            d, norm, jac = linearize(image, tau, window, opts.jacobian_gradient)
            q = build_constraints_q(tau, window) if opts.constraint_mode is ConstraintMode.CENTER_AREA else None
            projector = Projector.build(jac, q)
            problem = InnerProblem(d, projector, lam)

            if opts.inner.solver_kind is SolverKind.ADM:
                a, e, delta_tau, report = solve_adm(problem, opts.inner)
            else:
                warm = state if opts.warm_start else None
                a, e, report, state = solve_ladmap(problem, warm, opts.inner)
                delta_tau = projector.recover_delta_tau(a, e, d)

            tau = tau + delta_tau
            result.a_star, result.e_star, result.tau_star = a, e, tau
            result.outer_iters = i + 1
            result.inner_reports.append(report)
            result.tau_history.append(tau)
            result.norm_factors.append(norm)
            previous = result.objective_history[-1] if result.objective_history else None
            result.objective_history.append(report.objective)

            step = float(np.max(np.abs(delta_tau)))
            self.logger.info(
                f"Outer iteration {i + 1}: |dtau|_inf={step:.3e}, inner iterations={report.iterations}, "
                f"objective={report.objective:.6g}"
            )
            if previous is not None and report.objective >= previous:
                self.logger.warning(
                    f"Inner objective did not decrease at outer iteration {i + 1} "
                    f"({previous:.6g} -> {report.objective:.6g})"
                )
            if step < opts.tau_tol:
                result.converged = True
                return


def run_tilt(
    image: GrayImage, window: WindowSpec, tau0: Optional[TransformParams] = None,
    opts: Optional[OuterOptions] = None,
) -> TiltResult:
    """Rectify one window; see :class:`TiltRectifier`."""
    return TiltRectifier(opts).run(image, window, tau0)
