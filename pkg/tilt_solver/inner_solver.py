"""Inner convex solvers for the low-rank plus sparse split of a warped patch.

Two algorithms share this module:

* ``solve_adm`` is the three-variable alternating direction baseline over
  (A, E, dtau) with an unbounded geometric penalty.
* ``solve_ladmap`` eliminates dtau through the projector and runs the
  linearized two-variable iteration with the adaptive penalty rule and
  KKT-based stopping, optionally warm-started from a previous solve and
  optionally using warm-started SVDs.
"""
import logging
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from tilt_solver.config.config import SolverOptions
from tilt_solver.errors import DegenerateProblemError, DivergenceError
from tilt_solver.linalg import ensure_finite, nuclear_norm, shrink_factors, shrink_scalar, spectral_norm, svd_full
from tilt_solver.models import InnerState, SolveReport, SolverKind, StopCheck, StopReason, SvdFactors
from tilt_solver.projector import Projector
from tilt_solver.svd_warmstart import svd_warm

logger = logging.getLogger("tilt_solver")

# mu0 = MU0_FACTOR / ||D||_2 when not configured
MU0_FACTOR = 1.25
MU_MAX_RATIO = 1e10
# warm SVDs must track the SVD of M_k more closely than the iteration moves
WARM_GATE_FRACTION = 0.5
# ||P(D)|| at or below this fraction of ||D|| counts as zero
DEGENERATE_RATIO = 1e-10


@dataclass(frozen=True)
class InnerProblem:
    """One inner program: min ||A||_* + lam ||E||_1 s.t. P(A + E) = P(D)."""
    d_tau: np.ndarray
    projector: Projector
    lam: float

    def __post_init__(self):
        d_tau = ensure_finite(self.d_tau, "warped patch")
        if d_tau.shape != self.projector.shape:
            raise ValueError(f"Patch shape {d_tau.shape} does not match projector shape {self.projector.shape}")
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "d_tau", d_tau)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.d_tau.shape

    @cached_property
    def norm_ref(self) -> float:
        """||P(D)||_F, the scale both stopping criteria are measured against."""
        return float(np.linalg.norm(self.projector.apply(self.d_tau)))

    @property
    def degenerate(self) -> bool:
        """True when D lies (numerically) in the range of J, leaving nothing to split."""
        return self.norm_ref <= DEGENERATE_RATIO * float(np.linalg.norm(self.d_tau))


def objective(a: np.ndarray, e: np.ndarray, lam: float) -> float:
    """||A||_* + lam * ||E||_1."""
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    if a.shape != e.shape:
        raise ValueError(f"A has shape {a.shape} but E has shape {e.shape}")
    return nuclear_norm(a) + lam * float(np.sum(np.abs(e)))


def default_penalty(d_tau: np.ndarray, opts: SolverOptions) -> Tuple[float, float]:
    """Resolve (mu0, mu_max), deriving unset values from the data."""
    mu0 = opts.mu0
    if mu0 is None:
        norm2 = spectral_norm(d_tau)
        mu0 = MU0_FACTOR / norm2 if norm2 > 0 else MU0_FACTOR
    mu_max = opts.mu_max if opts.mu_max is not None else MU_MAX_RATIO * mu0
    if mu_max < mu0:
        raise ValueError(f"mu_max ({mu_max:.3g}) is below mu0 ({mu0:.3g})")
    return mu0, mu_max


def update_penalty(
    mu: float, delta_a: float, delta_e: float, norm_ref: float, opts: SolverOptions, mu_max: float
) -> float:
    """Adaptive penalty: grow by rho0 only once the iterates have nearly stalled.

    rho = rho0 if mu * max(delta_a, delta_e) / norm_ref < eps2 (strict), else 1;
    the new penalty is min(mu_max, rho * mu).
    """
    if norm_ref <= 0:
        raise DegenerateProblemError("Penalty update needs a positive reference norm")
    rho = opts.rho0 if mu * max(delta_a, delta_e) / norm_ref < opts.eps2 else 1.0
    return min(mu_max, rho * mu)


def warm_svd_gate(
    m: np.ndarray, residual: np.ndarray, delta_a: float, delta_e: float, opts: SolverOptions
) -> float:
    """Largest drift ||M_k - U Sigma V^T||_F for which a warm SVD is accepted.

    Starts at eps_svd * ||M_k||_F and shrinks with the last constraint residual
    and the last iterate change, so near the tolerances every SVD is full and
    the approximation error cannot floor either stopping criterion.
    """
    gate = opts.eps_svd * float(np.linalg.norm(m))
    gate = min(gate, WARM_GATE_FRACTION * float(np.linalg.norm(residual)))
    return min(gate, WARM_GATE_FRACTION * max(delta_a, delta_e))


def check_stop(
    state: InnerState,
    problem: InnerProblem,
    delta_a: float,
    delta_e: float,
    opts: SolverOptions,
    residual: Optional[np.ndarray] = None,
) -> StopCheck:
    """Evaluate the feasibility and stationarity criteria.

    ``residual`` is P(A + E - D) when the caller already has it; otherwise it is
    computed here with one extra projector application.

    Raises:
        DegenerateProblemError: if ||P(D)||_F is zero
    """
    norm_ref = problem.norm_ref
    if problem.degenerate:
        raise DegenerateProblemError("Projected patch has zero norm; stopping criteria are undefined")
    if residual is None:
        residual = problem.projector.apply(state.a + state.e - problem.d_tau)
    crit1 = float(np.linalg.norm(residual)) / norm_ref
    crit2 = state.mu * max(delta_a, delta_e) / norm_ref
    return StopCheck(stop=crit1 < opts.eps1 and crit2 < opts.eps2, crit1=crit1, crit2=crit2)


def _check_divergence(report: SolveReport, value: float, *iterates: np.ndarray, limit: float) -> None:
    finite = all(np.all(np.isfinite(x)) for x in iterates)
    if not finite or not np.isfinite(value) or value > limit:
        raise DivergenceError(
            f"{report.solver} diverged at iteration {report.iterations} (objective {value:.3e})",
            report=report,
        )


def _trivial_solution(shape: Tuple[int, int], solver: str, mu: float) -> Tuple[np.ndarray, np.ndarray, SolveReport, InnerState]:
    zeros = np.zeros(shape)
    report = SolveReport(solver=solver, stop_reason=StopReason.CONVERGED)
    state = InnerState(a=zeros.copy(), e=zeros.copy(), y_tilde=zeros.copy(), mu=mu)
    return zeros, zeros.copy(), report, state


def solve_ladmap(
    problem: InnerProblem,
    warm: Optional[InnerState] = None,
    opts: Optional[SolverOptions] = None,
) -> Tuple[np.ndarray, np.ndarray, SolveReport, InnerState]:
    """Solve the inner program by LADMAP.

    Args:
        problem: Normalized patch, projector and lambda
        warm: Terminal state of the previous inner solve, if any
        opts: Solver options; ``solver_kind`` LADMAP_SVDWS enables warm SVDs

    Returns:
        Tuple of (A, E, report, terminal state)

    Raises:
        DivergenceError: if an iterate becomes non-finite or the objective explodes
    """
    opts = opts or SolverOptions()
    use_warm_svd = opts.solver_kind is SolverKind.LADMAP_SVDWS
    label = opts.solver_kind.value if opts.solver_kind is not SolverKind.ADM else SolverKind.LADMAP.value
    proj = problem.projector
    d = problem.d_tau
    lam = problem.lam
    started = time.perf_counter()

    mu0, mu_max = default_penalty(d, opts)
    if problem.degenerate:
        logger.debug("Projected patch is zero; returning the trivial decomposition")
        return _trivial_solution(problem.shape, label, mu0)

    if warm is not None and warm.shape == problem.shape:
        a = np.array(warm.a, dtype=float)
        e = np.array(warm.e, dtype=float)
        y = proj.project_multiplier(warm.y_tilde)
    else:
        if warm is not None:
            logger.debug(f"Warm state has shape {warm.shape}, problem has {problem.shape}; cold start")
        a = d.copy()
        e = np.zeros_like(d)
        y = np.zeros_like(d)
    mu = mu0

    report = SolveReport(solver=label)
    residual = proj.apply(a + e - d)
    applications_before = proj.applications
    factors: Optional[SvdFactors] = None
    delta_a = delta_e = float("inf")

    for k in range(opts.max_inner_iters):
        m = a - (residual + y / mu) / opts.eta_a
        if use_warm_svd and factors is not None:
            eps_svd = warm_svd_gate(m, residual, delta_a, delta_e, opts)
            factors, used_warm = svd_warm(m, factors, eps_svd, steps=opts.svd_warm_steps)
        else:
            factors, used_warm = svd_full(m), False
        if used_warm:
            report.warm_svd_count += 1
        else:
            report.full_svd_count += 1
        a_new, shrunk = shrink_factors(factors, 1.0 / (mu * opts.eta_a))

        s = proj.apply(a_new + e - d)
        n = e - (s + y / mu) / opts.eta_b
        e_new = shrink_scalar(n, lam / (mu * opts.eta_b))

        residual = proj.apply(a_new + e_new - d)
        y = y + mu * residual

        delta_a = float(np.linalg.norm(a_new - a))
        delta_e = float(np.linalg.norm(e_new - e))
        a, e = a_new, e_new

        value = float(np.sum(np.abs(shrunk))) + lam * float(np.sum(np.abs(e)))
        state = InnerState(a=a, e=e, y_tilde=y, mu=mu, k=k + 1)
        check = check_stop(state, problem, delta_a, delta_e, opts, residual=residual)

        report.iterations = k + 1
        report.objective_trace.append(value)
        report.constraint_trace.append(check.crit1)
        report.mu_trace.append(mu)
        _check_divergence(report, value, a, e, y, limit=opts.divergence_limit)

        if check.stop:
            report.stop_reason = StopReason.CONVERGED
            break
        mu = update_penalty(mu, delta_a, delta_e, problem.norm_ref, opts, mu_max)

    report.projector_applications = proj.applications - applications_before
    report.wall_time = time.perf_counter() - started
    logger.debug(
        f"{label}: {report.iterations} iterations, {report.stop_reason.value}, "
        f"objective {report.objective:.6g}, SVDs full={report.full_svd_count} warm={report.warm_svd_count}"
    )
    return a, e, report, InnerState(a=a, e=e, y_tilde=y, mu=mu, k=report.iterations)


def solve_adm(
    problem: InnerProblem,
    opts: Optional[SolverOptions] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, SolveReport]:
    """Solve the linearized program by the three-variable ADM baseline.

    Alternates A = S_{1/mu}(D + J dtau - E + Y/mu), E = T_{lam/mu}(D + J dtau - A + Y/mu)
    and the least-squares dtau step, then Y += mu (D + J dtau - A - E) and
    mu *= adm_rho with no upper bound. Always cold-started.

    Returns:
        Tuple of (A, E, dtau, report)

    Raises:
        DivergenceError: if an iterate becomes non-finite or the objective explodes
    """
    opts = opts or SolverOptions()
    proj = problem.projector
    jac = proj.jac.data
    d = problem.d_tau
    lam = problem.lam
    started = time.perf_counter()
    report = SolveReport(solver=SolverKind.ADM.value)

    norm_d = float(np.linalg.norm(d))
    if norm_d == 0.0:
        report.stop_reason = StopReason.CONVERGED
        zeros = np.zeros(problem.shape)
        return zeros, zeros.copy(), np.zeros(jac.shape[1]), report

    mu, _ = default_penalty(d, opts)
    a = d.copy()
    e = np.zeros_like(d)
    delta_tau = np.zeros(jac.shape[1])
    y = np.zeros_like(d)

    for k in range(opts.max_inner_iters):
        j_dtau = proj.expand(delta_tau)
        factors = svd_full(d + j_dtau - e + y / mu)
        a, shrunk = shrink_factors(factors, 1.0 / mu)
        report.full_svd_count += 1
        e = shrink_scalar(d + j_dtau - a + y / mu, lam / mu)
        rhs = (a + e - d - y / mu).ravel(order="F")
        delta_tau = proj.solve_gram(jac.T @ rhs)

        gap = d + proj.expand(delta_tau) - a - e
        y = y + mu * gap
        crit1 = float(np.linalg.norm(gap)) / norm_d
        value = float(np.sum(np.abs(shrunk))) + lam * float(np.sum(np.abs(e)))

        report.iterations = k + 1
        report.objective_trace.append(value)
        report.constraint_trace.append(crit1)
        report.mu_trace.append(mu)
        _check_divergence(report, value, a, e, y, limit=opts.divergence_limit)

        if crit1 < opts.eps1:
            report.stop_reason = StopReason.CONVERGED
            break
        mu *= opts.adm_rho

    report.wall_time = time.perf_counter() - started
    logger.debug(
        f"adm: {report.iterations} iterations, {report.stop_reason.value}, objective {report.objective:.6g}"
    )
    return a, e, delta_tau, report
