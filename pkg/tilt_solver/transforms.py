"""Affine and projective warp algebra.

A parameter vector maps to the 3x3 matrix

    [[a11, a12, tx],
     [a21, a22, ty],
     [h31, h32, 1 ]]

with h31 = h32 = 0 for affine warps. Points are given in window-local
coordinates (u, v) centred on the window; callers add the window centre.
"""
from typing import Tuple

import numpy as np

from tilt_solver.models import TransformKind, TransformParams


def to_matrix(tau: TransformParams) -> np.ndarray:
    """3x3 homogeneous matrix of ``tau``."""
    p = tau.params
    matrix = np.array([[p[0], p[1], p[4]], [p[2], p[3], p[5]], [0.0, 0.0, 1.0]])
    if tau.kind is TransformKind.PROJECTIVE:
        matrix[2, 0], matrix[2, 1] = p[6], p[7]
    return matrix


def from_matrix(matrix: np.ndarray, kind: TransformKind = TransformKind.AFFINE) -> TransformParams:
    """Inverse of :func:`to_matrix`; the matrix is rescaled so its lower-right entry is 1."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (3, 3):
        raise ValueError(f"Expected a 3x3 matrix, got {matrix.shape}")
    if matrix[2, 2] == 0:
        raise ValueError("Matrix has a zero normalization entry")
    matrix = matrix / matrix[2, 2]
    params = [matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1], matrix[0, 2], matrix[1, 2]]
    if kind is TransformKind.PROJECTIVE:
        params += [matrix[2, 0], matrix[2, 1]]
    elif matrix[2, 0] != 0 or matrix[2, 1] != 0:
        raise ValueError("Matrix has a projective row but an affine kind was requested")
    return TransformParams(kind, np.array(params))


def map_points(tau: TransformParams, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the warp to local coordinates."""
    p = tau.params
    x = p[0] * u + p[1] * v + p[4]
    y = p[2] * u + p[3] * v + p[5]
    if tau.kind is TransformKind.PROJECTIVE:
        w = p[6] * u + p[7] * v + 1.0
        x, y = x / w, y / w
    return x, y


def point_derivatives(tau: TransformParams, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives of the mapped x and y w.r.t. every parameter.

    Returns two arrays of shape (len(u), p).
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    ones = np.ones_like(u)
    zeros = np.zeros_like(u)
    if tau.kind is TransformKind.AFFINE:
        dx = np.column_stack([u, v, zeros, zeros, ones, zeros])
        dy = np.column_stack([zeros, zeros, u, v, zeros, ones])
        return dx, dy

    p = tau.params
    w = p[6] * u + p[7] * v + 1.0
    x, y = map_points(tau, u, v)
    dx = np.column_stack([u / w, v / w, zeros, zeros, 1.0 / w, zeros, -x * u / w, -x * v / w])
    dy = np.column_stack([zeros, zeros, u / w, v / w, zeros, 1.0 / w, -y * u / w, -y * v / w])
    return dx, dy


def is_invertible(tau: TransformParams, tol: float = 1e-12) -> bool:
    return abs(np.linalg.det(to_matrix(tau))) > tol


def relative_error(tau: TransformParams, truth: TransformParams) -> float:
    """||tau - truth||_2 / ||truth||_2 over the ordered parameter vector.

    An affine vector compared with a projective one is padded with zeros.
    """
    a, b = tau.params, truth.params
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    norm = np.linalg.norm(b)
    if norm == 0:
        raise ValueError("Ground-truth transform has zero norm")
    return float(np.linalg.norm(a - b) / norm)


def rotation_shear(theta: float, t: float) -> np.ndarray:
    """2x2 deformation R(theta) @ [[1, t], [0, 1]]."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]]) @ np.array([[1.0, t], [0.0, 1.0]])


def checkerboard_ground_truth(theta: float, t: float) -> TransformParams:
    """Transform that undoes a rotation/shear deformation about the window centre.

    Rendering a texture under y = A x + b and windowing it around b gives a
    ground truth equal to A with zero translation.
    """
    matrix = np.eye(3)
    matrix[:2, :2] = rotation_shear(theta, t)
    return from_matrix(matrix, TransformKind.AFFINE)


def promote(tau: TransformParams, kind: TransformKind) -> TransformParams:
    """Convert ``tau`` to ``kind``; only affine -> projective (or same kind) is lossless."""
    if tau.kind is kind:
        return tau
    return from_matrix(to_matrix(tau), kind)
