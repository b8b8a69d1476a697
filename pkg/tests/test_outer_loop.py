"""Tests for the outer rectification loop."""
import logging

import numpy as np
import pytest

from tilt_solver.config.config import OuterOptions
from tilt_solver.errors import DegenerateWindowError, SingularJacobianError, TiltError, WindowEscapeError
from tilt_solver.imaging import gen_checkerboard, warp_patch
from tilt_solver.models import ConstraintMode, GrayImage, TransformParams, WindowSpec
from tilt_solver.outer_loop import (
    TiltRectifier, build_constraints_q, linearize, normalize_patch, run_tilt, window_geometry,
)
from tilt_solver.transforms import checkerboard_ground_truth, relative_error


@pytest.fixture
def off_grid_tau():
    """Small rotation plus a fractional shift, so no sample lands on a pixel centre."""
    c, s = np.cos(0.03), np.sin(0.03)
    return TransformParams.identity() + np.array([c - 1.0, -s, s, c - 1.0, 0.37, -0.21])


class TestLinearize:
    """Tests for normalize_patch and linearize."""

    def test_normalize_patch(self):
        d, norm = normalize_patch(np.full((2, 2), 3.0))
        assert norm == pytest.approx(6.0)
        assert np.linalg.norm(d) == pytest.approx(1.0)
        with pytest.raises(DegenerateWindowError):
            normalize_patch(np.zeros((3, 3)))

    def test_patch_is_normalized_warp(self, deformed_checkerboard, off_grid_tau):
        image, window = deformed_checkerboard
        d, norm, jac = linearize(image, off_grid_tau, window)
        raw = warp_patch(image, off_grid_tau, window)
        np.testing.assert_allclose(d * norm, raw, atol=1e-12)
        assert jac.shape == window.shape
        assert jac.p == 6

    def test_jacobian_matches_finite_differences(self, deformed_checkerboard, off_grid_tau):
        image, window = deformed_checkerboard
        _, _, jac = linearize(image, off_grid_tau, window)
        step = 1e-5
        columns = []
        for j in range(6):
            delta = np.zeros(6)
            delta[j] = step
            plus, _, _ = linearize(image, off_grid_tau + delta, window)
            minus, _, _ = linearize(image, off_grid_tau + (-delta), window)
            columns.append(((plus - minus) / (2 * step)).ravel(order="F"))
        fd = np.column_stack(columns)
        assert np.linalg.norm(fd - jac.data) / np.linalg.norm(jac.data) < 1e-2

    def test_flat_image_is_singular(self):
        image = GrayImage(np.full((40, 40), 0.5))
        with pytest.raises(SingularJacobianError):
            linearize(image, TransformParams.identity(), WindowSpec(10, 10, 16, 16))

    def test_escape_with_margin(self, deformed_checkerboard):
        image, _ = deformed_checkerboard
        rows, cols = image.pixels.shape
        with pytest.raises(WindowEscapeError):
            linearize(image, TransformParams.identity(), WindowSpec(0, 0, 20, 20))
        with pytest.raises(WindowEscapeError):
            linearize(image, TransformParams.identity(), WindowSpec(cols - 20, rows - 20, 20, 20))


class TestConstraints:
    """Tests for the centre and area constraints."""

    def test_identity_geometry(self):
        window = WindowSpec(0, 0, 11, 7)
        np.testing.assert_allclose(window_geometry(TransformParams.identity(), window), [0.0, 0.0, 60.0])

    def test_rotation_is_free(self):
        window = WindowSpec(0, 0, 20, 16)
        q = build_constraints_q(TransformParams.identity(), window)
        rotation = np.array([0.0, -1.0, 1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(q.data @ rotation, 0.0, atol=1e-6)
        np.testing.assert_allclose(np.linalg.norm(q.data, axis=1), 1.0)

    def test_translation_and_scale_are_blocked(self):
        window = WindowSpec(0, 0, 20, 16)
        q = build_constraints_q(TransformParams.identity(), window)
        assert abs(q.data @ np.array([0, 0, 0, 0, 1.0, 0]))[0] > 0.5
        assert abs(q.data @ np.array([0, 0, 0, 0, 0, 1.0]))[1] > 0.5
        assert abs(q.data @ np.array([1.0, 0, 0, 1.0, 0, 0]))[2] > 0.5


class TestTiltRectifier:
    """Tests for the outer loop driver."""

    def test_escape_attaches_partial_result(self, deformed_checkerboard):
        image, _ = deformed_checkerboard
        window = WindowSpec(0, 0, 30, 30)
        with pytest.raises(TiltError) as info:
            run_tilt(image, window, None, OuterOptions(show_progress=False))
        assert info.value.result is not None
        assert info.value.result.outer_iters == 0

    def test_one_iteration_bookkeeping(self, deformed_checkerboard, quiet_options, caplog):
        image, window = deformed_checkerboard
        quiet_options.max_outer_iters = 1
        with caplog.at_level(logging.INFO, logger="tilt_solver"):
            result = TiltRectifier(quiet_options).run(image, window)
        assert result.outer_iters == 1
        assert len(result.tau_history) == 2
        assert len(result.inner_reports) == 1
        assert len(result.norm_factors) == 1
        assert result.a_star.shape == window.shape
        assert any("Outer iteration 1" in r.getMessage() for r in caplog.records)

    def test_constraints_keep_centre(self, deformed_checkerboard, quiet_options):
        image, window = deformed_checkerboard
        quiet_options.max_outer_iters = 3
        result = run_tilt(image, window, None, quiet_options)
        np.testing.assert_allclose(result.tau_star.params[4:], 0.0, atol=1e-2)

    @pytest.mark.slow
    @pytest.mark.parametrize("solver", ["adm", "ladmap", "ladmap-vws-svdws"])
    def test_recovers_rotation(self, deformed_checkerboard, quiet_options, solver):
        image, window = deformed_checkerboard
        result = run_tilt(image, window, None, quiet_options.with_solver(solver))
        truth = checkerboard_ground_truth(np.deg2rad(5.0), 0.0)
        assert relative_error(result.tau_star, truth) < 0.05

    @pytest.mark.slow
    def test_unconstrained_run(self, deformed_checkerboard, quiet_options):
        image, window = deformed_checkerboard
        quiet_options.constraint_mode = ConstraintMode.NONE
        quiet_options.max_outer_iters = 5
        result = run_tilt(image, window, None, quiet_options)
        assert result.outer_iters >= 1
        assert np.all(np.isfinite(result.tau_star.params))


class TestRecovery:
    """Fixed points, recovery and warm starts on checkerboards."""

    def test_undeformed_is_a_fixed_point(self, quiet_options):
        image = gen_checkerboard(cells=8, cell_px=12)
        window = WindowSpec.centered(image.pixels.shape, 48, 48)
        result = run_tilt(image, window, None, quiet_options)
        assert result.converged
        assert result.outer_iters <= 3
        identity = TransformParams.identity()
        assert np.linalg.norm(result.tau_star.params - identity.params) < 1e-3

    @pytest.mark.slow
    def test_recovers_ten_degree_rotation(self, quiet_options):
        theta = np.deg2rad(10.0)
        image = gen_checkerboard(cells=8, cell_px=12, theta=theta)
        window = WindowSpec.centered(image.pixels.shape, 48, 48)
        result = run_tilt(image, window, None, quiet_options.with_solver("ladmap-vws"))
        assert relative_error(result.tau_star, checkerboard_ground_truth(theta, 0.0)) < 0.05

    @pytest.mark.slow
    @pytest.mark.parametrize("theta_deg", [5.0, 10.0])
    def test_warm_start_costs_at_most_twenty_percent_more(self, quiet_options, theta_deg):
        image = gen_checkerboard(cells=8, cell_px=12, theta=np.deg2rad(theta_deg))
        window = WindowSpec.centered(image.pixels.shape, 48, 48)
        cold = run_tilt(image, window, None, quiet_options.with_solver("ladmap"))
        warm = run_tilt(image, window, None, quiet_options.with_solver("ladmap-vws"))
        assert warm.inner_iterations <= 1.2 * cold.inner_iterations
