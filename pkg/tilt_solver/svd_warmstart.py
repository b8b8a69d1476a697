"""Warm-started SVD: one projected-gradient step along Cayley curves.

Given factors of M_{k-1}, the factors of a nearby M_k are approximated by
minimizing f(t) = 1/2 ||M - U(t) Sigma(t) V(t)^T||_F^2 along

    U(t)     = (I + t/2 P_U)^{-1} (I - t/2 P_U) U
    Sigma(t) = Sigma - t P_Sigma
    V(t)     = (I + t/2 P_V)^{-1} (I - t/2 P_V) V

with the step taken at the vertex of the second-order Taylor model of f.
All routines assume a tall matrix (m >= n); :func:`svd_warm` transposes wide
input.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from tilt_solver.linalg import svd_full
from tilt_solver.models import SvdFactors

logger = logging.getLogger("tilt_solver")

# Curvature below this is treated as flat or concave; the step is skipped
CURVATURE_FLOOR = 1e-14


@dataclass(frozen=True)
class ProjectedGradients:
    """Tangent-space gradients of F at the current factors.

    P_U is m x m, so it is kept in low-rank form P_U = L R^T with
    L = [X, M] and R = [M, -X], where X = U Sigma V^T.
    """
    u_left: np.ndarray
    u_right: np.ndarray
    p_sigma: np.ndarray
    p_v: np.ndarray
    product: np.ndarray  # cached X = U Sigma V^T

    @property
    def p_u(self) -> np.ndarray:
        """Dense P_U; only for inspection, the solver never forms it."""
        return self.u_left @ self.u_right.T

    def p_u_times(self, x: np.ndarray) -> np.ndarray:
        """P_U @ x without forming P_U."""
        return self.u_left @ (self.u_right.T @ x)


def gradients(factors: SvdFactors, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euclidean gradients (G_U, G_Sigma, G_V) of F(U, Sigma, V) = 1/2 ||M - U Sigma V^T||^2.

    G_Sigma is returned as the full n x n matrix Sigma - U^T M V.
    """
    u, s, v = factors.u, factors.sigma, factors.v
    g_u = u * s**2 - (m @ v) * s
    g_v = v * s**2 - (m.T @ u) * s
    g_sigma = np.diag(s) - u.T @ m @ v
    return g_u, g_sigma, g_v


def projected_gradients(factors: SvdFactors, m: np.ndarray) -> ProjectedGradients:
    """Project the gradients onto the tangent spaces of the constraint manifolds.

    Uses P_U = X M^T - M X^T and P_V = X^T M - M^T X with the cached product
    X = U Sigma V^T, and P_Sigma = diag(Sigma - U^T M V).
    """
    u, s, v = factors.u, factors.sigma, factors.v
    product = (u * s) @ v.T
    p_v = product.T @ m - m.T @ product
    p_sigma = s - np.einsum("ij,ij->j", u, m @ v)
    return ProjectedGradients(
        u_left=np.hstack([product, m]),
        u_right=np.hstack([m, -product]),
        p_sigma=p_sigma,
        p_v=p_v,
        product=product,
    )


def _cayley_dense(p: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    eye = np.eye(p.shape[0])
    return scipy.linalg.solve(eye + 0.5 * t * p, (eye - 0.5 * t * p) @ x, check_finite=False)


def _cayley_lowrank(left: np.ndarray, right: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    # Sherman-Morrison-Woodbury: X(t) = X - t L (I + t/2 R^T L)^{-1} R^T X
    k = left.shape[1]
    core = np.eye(k) + 0.5 * t * (right.T @ left)
    return x - t * left @ scipy.linalg.solve(core, right.T @ x, check_finite=False)


def curve_point(factors: SvdFactors, pg: ProjectedGradients, t: float) -> SvdFactors:
    """Factors at parameter ``t`` on the Cayley search curve."""
    if t == 0.0:
        return factors
    m, n = factors.u.shape
    if 2 * n < m:
        u_t = _cayley_lowrank(pg.u_left, pg.u_right, factors.u, t)
    else:
        u_t = _cayley_dense(pg.p_u, factors.u, t)
    v_t = _cayley_dense(pg.p_v, factors.v, t)
    return SvdFactors(u=u_t, sigma=factors.sigma - t * pg.p_sigma, v=v_t)


def curve_derivatives(factors: SvdFactors, pg: ProjectedGradients, m: np.ndarray) -> Tuple[float, float]:
    """First and second derivatives of f along the curve at t = 0.

    h(0)   = M - X
    h'(0)  = P_U X + U P_Sigma V^T - X P_V
    h''(0) = -P_U Z + Z P_V,  Z = h'(0) + U P_Sigma V^T
    """
    u, v = factors.u, factors.v
    x = pg.product
    h0 = m - x
    sigma_term = (u * pg.p_sigma) @ v.T
    h1 = pg.p_u_times(x) + sigma_term - x @ pg.p_v
    z = h1 + sigma_term
    h2 = -pg.p_u_times(z) + z @ pg.p_v
    f1 = float(np.vdot(h0, h1))
    f2 = float(np.vdot(h1, h1) + np.vdot(h0, h2))
    return f1, f2


def taylor_step(factors: SvdFactors, pg: ProjectedGradients, m: np.ndarray) -> float:
    """Vertex t* = -f'(0)/f''(0) of the quadratic model, or 0 if the model is not convex."""
    f1, f2 = curve_derivatives(factors, pg, m)
    if f2 <= CURVATURE_FLOOR:
        return 0.0
    return -f1 / f2


def _residual(factors: SvdFactors, m: np.ndarray) -> float:
    return float(np.linalg.norm(m - factors.reconstruct()))


def warm_step(m: np.ndarray, prev: SvdFactors, steps: int = 1) -> SvdFactors:
    """Move tall-matrix factors towards the SVD of ``m`` by ``steps`` Taylor steps.

    A step that fails to reduce the residual is discarded (t = 0).
    """
    factors = prev
    residual = _residual(factors, m)
    for _ in range(steps):
        pg = projected_gradients(factors, m)
        t_star = taylor_step(factors, pg, m)
        if t_star == 0.0:
            break
        candidate = curve_point(factors, pg, t_star)
        candidate_residual = _residual(candidate, m)
        if candidate_residual > residual:
            logger.debug(f"Warm SVD step t={t_star:.3e} increased the residual; keeping previous factors")
            break
        factors, residual = candidate, candidate_residual
    return factors


def svd_warm(m: np.ndarray, prev: SvdFactors, eps_svd: float, steps: int = 1) -> Tuple[SvdFactors, bool]:
    """Approximate SVD of ``m`` from the factors of the previous iterate.

    The warm path is taken only when ||m - U Sigma V^T||_F < eps_svd for the
    cached factors (strict inequality); otherwise a full SVD is computed. The
    LADMAP loop passes an absolute gate from ``inner_solver.warm_svd_gate``.

    Returns:
        Tuple of (factors, used_warm)
    """
    m = np.asarray(m, dtype=float)
    if prev.shape != m.shape:
        return svd_full(m), False
    drift = _residual(prev, m)
    if not drift < eps_svd:
        return svd_full(m), False
    if m.shape[0] < m.shape[1]:
        return warm_step(m.T, prev.transpose(), steps).transpose(), True
    return warm_step(m, prev, steps), True
