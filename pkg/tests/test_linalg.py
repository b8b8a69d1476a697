"""Tests for the dense matrix kernels."""
import numpy as np
import pytest

from tilt_solver.errors import NonFiniteInputError
from tilt_solver.linalg import (
    nuclear_norm, shrink_factors, shrink_scalar, shrink_singular, spectral_norm, svd_full,
)


class TestSvd:
    """Tests for svd_full."""

    @pytest.mark.parametrize("shape", [(7, 4), (4, 7), (5, 5)])
    def test_reconstructs_input(self, rng, shape):
        """Factors reproduce the matrix for tall, wide and square input."""
        m = rng.standard_normal(shape)
        factors = svd_full(m)
        assert factors.shape == shape
        np.testing.assert_allclose(factors.reconstruct(), m, atol=1e-10)
        assert np.all(factors.sigma >= 0)
        assert np.all(np.diff(factors.sigma) <= 1e-12)

    def test_rejects_nan(self):
        """A NaN entry raises before LAPACK is called."""
        m = np.ones((3, 3))
        m[1, 1] = np.nan
        with pytest.raises(NonFiniteInputError):
            svd_full(m)


class TestShrinkage:
    """Tests for the scalar and singular value shrinkage operators."""

    def test_scalar_values(self):
        """Soft thresholding moves every entry towards zero by eps."""
        m = np.array([[-3.0, -0.5], [0.2, 2.0]])
        np.testing.assert_allclose(shrink_scalar(m, 1.0), [[-2.0, 0.0], [0.0, 1.0]])

    def test_zero_threshold_is_identity(self, rng):
        m = rng.standard_normal((4, 6))
        np.testing.assert_array_equal(shrink_scalar(m, 0.0), m)
        np.testing.assert_allclose(shrink_singular(m, 0.0), m, atol=1e-10)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            shrink_scalar(np.ones(2), -1.0)
        with pytest.raises(ValueError):
            shrink_singular(np.ones((2, 2)), -1.0)

    def test_singular_values_shrink(self, rng):
        """S_eps lowers every singular value by eps and drops the ones below it."""
        u, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        v, _ = np.linalg.qr(rng.standard_normal((4, 3)))
        m = (u * np.array([5.0, 2.0, 0.5])) @ v.T
        result = shrink_singular(m, 1.0)
        np.testing.assert_allclose(np.linalg.svd(result, compute_uv=False)[:3], [4.0, 1.0, 0.0], atol=1e-10)

    def test_scalar_is_nonexpansive(self, rng):
        for _ in range(100):
            x, y = rng.standard_normal((2, 6, 4))
            eps = rng.uniform(0.0, 2.0)
            diff = np.abs(shrink_scalar(x, eps) - shrink_scalar(y, eps))
            assert np.all(diff <= np.abs(x - y) + 1e-12)

    def test_singular_is_firmly_nonexpansive(self, rng):
        """||S(W1) - S(W2)||^2 <= ||W1 - W2||^2 - ||(S(W1) - W1) - (S(W2) - W2)||^2."""
        for _ in range(100):
            w1, w2 = rng.standard_normal((2, 7, 5))
            eps = rng.uniform(0.1, 3.0)
            s1, s2 = shrink_singular(w1, eps), shrink_singular(w2, eps)
            lhs = np.linalg.norm(s1 - s2) ** 2
            rhs = np.linalg.norm(w1 - w2) ** 2 - np.linalg.norm((s1 - w1) - (s2 - w2)) ** 2
            assert lhs <= rhs + 1e-8

    def test_large_threshold_gives_zero(self, rng):
        m = rng.standard_normal((5, 3))
        matrix, shrunk = shrink_factors(svd_full(m), 1e6)
        assert not np.any(matrix)
        assert not np.any(shrunk)


class TestNorms:
    """Tests for the nuclear and spectral norms."""

    def test_nuclear_norm_of_diagonal(self):
        assert nuclear_norm(np.diag([3.0, -2.0, 1.0])) == pytest.approx(6.0)

    def test_spectral_norm_matches_svd(self, rng):
        m = rng.standard_normal((20, 12))
        assert spectral_norm(m, max_iter=500, tol=1e-12) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)

    def test_spectral_norm_of_zero(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0
