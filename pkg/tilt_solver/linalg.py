"""Dense matrix kernels: full SVD and the two shrinkage operators."""
import logging
from typing import Tuple

import numpy as np
import scipy.linalg

from tilt_solver.errors import NonFiniteInputError
from tilt_solver.models import SvdFactors

logger = logging.getLogger("tilt_solver")


def ensure_finite(matrix: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Return ``matrix`` as a float array, rejecting NaN/Inf entries."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        bad = int(np.size(matrix) - np.count_nonzero(np.isfinite(matrix)))
        raise NonFiniteInputError(f"{what} has {bad} non-finite entries")
    return matrix


def svd_full(matrix: np.ndarray) -> SvdFactors:
    """Thin SVD with nonnegative, nonincreasing singular values.

    Wide inputs are decomposed through their transpose, so for an m x n input
    U is m x r and V is n x r with r = min(m, n).
    """
    matrix = ensure_finite(matrix, "SVD input")
    if matrix.ndim != 2:
        raise ValueError(f"SVD input must be 2-D, got shape {matrix.shape}")
    if matrix.shape[0] < matrix.shape[1]:
        return svd_full(matrix.T).transpose()

    try:
        u, s, vt = scipy.linalg.svd(
            matrix, full_matrices=False, check_finite=False, lapack_driver="gesdd"
        )
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge on nearly rank-deficient input
        logger.debug("gesdd did not converge, retrying with gesvd")
        u, s, vt = scipy.linalg.svd(
            matrix, full_matrices=False, check_finite=False, lapack_driver="gesvd"
        )
    return SvdFactors(u=u, sigma=s, v=vt.T)


def shrink_scalar(matrix: np.ndarray, eps: float) -> np.ndarray:
    """Soft thresholding T_eps applied entrywise."""
    if eps < 0:
        raise ValueError(f"Shrinkage threshold must be nonnegative, got {eps}")
    matrix = np.asarray(matrix, dtype=float)
    return np.sign(matrix) * np.maximum(np.abs(matrix) - eps, 0.0)


def shrink_factors(factors: SvdFactors, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Apply singular-value shrinkage to precomputed factors.

    Returns the shrunk matrix and the shrunk diagonal. Negative diagonal
    entries (possible after a warm-start step) are shrunk towards zero by sign.
    """
    shrunk = shrink_scalar(factors.sigma, eps)
    keep = shrunk != 0.0
    if not np.any(keep):
        return np.zeros(factors.shape), shrunk
    matrix = (factors.u[:, keep] * shrunk[keep]) @ factors.v[:, keep].T
    return matrix, shrunk


def shrink_singular(matrix: np.ndarray, eps: float) -> np.ndarray:
    """Singular-value shrinkage S_eps(M) = U T_eps(Sigma) V^T."""
    if eps < 0:
        raise ValueError(f"Shrinkage threshold must be nonnegative, got {eps}")
    result, _ = shrink_factors(svd_full(matrix), eps)
    return result


def nuclear_norm(matrix: np.ndarray) -> float:
    """Sum of singular values."""
    matrix = ensure_finite(matrix)
    return float(np.sum(scipy.linalg.svdvals(matrix, check_finite=False)))


def spectral_norm(matrix: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> float:
    """Largest singular value estimated by power iteration on M^T M."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.any(matrix):
        return 0.0
    # Fixed start vector keeps the estimate deterministic
    x = np.random.default_rng(0).standard_normal(matrix.shape[1])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        y = matrix.T @ (matrix @ x)
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        previous, estimate = estimate, np.sqrt(norm_y)
        if abs(estimate - previous) <= tol * estimate:
            break
    return float(estimate)
