"""Implicit projection operators used to cancel the transform increment.

The operator is J_perp = I - J (J^T J)^{-1} J^T, or with side constraints
W^T W = I - J (J^T J + Q^T Q)^{-1} J^T. Neither is ever formed: each
application costs O(p * m * n) through a cached Cholesky factor of the p x p
Gram matrix. Patches are vectorized in column-major order throughout.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from tilt_solver.errors import SingularJacobianError
from tilt_solver.models import ConstraintMatrix, JacobianMatrix

logger = logging.getLogger("tilt_solver")


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major flattening used for every patch/Jacobian product."""
    return np.asarray(matrix, dtype=float).ravel(order="F")


def unvec(vector: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.reshape(vector, shape, order="F")


@dataclass
class Projector:
    """J_perp (or W^T W when ``q`` is set) applied without materialization.

    The operator is immutable after :meth:`build`; ``applications`` is an
    instrumentation counter only.
    """
    jac: JacobianMatrix
    q: Optional[ConstraintMatrix]
    gram_factor: Tuple[np.ndarray, bool]
    applications: int = field(default=0, compare=False)

    @classmethod
    def build(cls, jac: JacobianMatrix, q: Optional[ConstraintMatrix] = None) -> "Projector":
        """Factor the (possibly constrained) Gram matrix once.

        Args:
            jac: Jacobian of the normalized patch
            q: Optional linearized side constraints

        Returns:
            Projector ready for repeated application

        Raises:
            SingularJacobianError: if J (stacked with Q) is rank deficient
        """
        data = np.asarray(jac.data, dtype=float)
        p = data.shape[1]
        if q is not None and q.data.shape[1] != p:
            raise ValueError(f"Constraint matrix has {q.data.shape[1]} columns, Jacobian has {p}")
        stacked = data if q is None else np.vstack([data, q.data])

        rank = np.linalg.matrix_rank(stacked)
        if rank < p:
            raise SingularJacobianError(
                f"Jacobian is rank deficient (rank {rank} < {p} parameters); "
                "the patch has too little texture for this transform"
            )

        gram = data.T @ data
        if q is not None:
            gram = gram + q.data.T @ q.data
        try:
            factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise SingularJacobianError(f"Gram matrix is not positive definite: {e}") from e
        return cls(jac=jac, q=q, gram_factor=factor)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.jac.shape

    @property
    def constrained(self) -> bool:
        return self.q is not None

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (J^T J [+ Q^T Q]) x = rhs with the cached factor."""
        return scipy.linalg.cho_solve(self.gram_factor, rhs, check_finite=False)

    def _check_shape(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != self.shape:
            raise ValueError(f"Expected a {self.shape} patch, got {matrix.shape}")
        return matrix

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Return J_perp v (or W^T W v) reshaped to the patch shape."""
        v = self._check_shape(v)
        self.applications += 1
        x = vec(v)
        jac = self.jac.data
        x = x - jac @ self.solve_gram(jac.T @ x)
        return unvec(x, self.shape)

    def project_multiplier(self, y: np.ndarray) -> np.ndarray:
        """Move a multiplier into the range of the operator for a warm start."""
        return self.apply(y)

    def recover_delta_tau(self, a: np.ndarray, e: np.ndarray, d_tau: np.ndarray) -> np.ndarray:
        """Least-squares transform increment for a solved (A, E).

        Unconstrained this is (J^T J)^{-1} J^T vec(A + E - D); with Q it is the
        least-squares solution of the stacked system [J; Q] dtau = [A+E-D; 0].
        """
        residual = self._check_shape(a) + self._check_shape(e) - self._check_shape(d_tau)
        return self.solve_gram(self.jac.data.T @ vec(residual))

    def expand(self, delta_tau: np.ndarray) -> np.ndarray:
        """J * dtau as a patch-shaped matrix."""
        return unvec(self.jac.data @ np.asarray(delta_tau, dtype=float), self.shape)
