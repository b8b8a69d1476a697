"""Tests for the option dataclasses and the validated run configuration."""
import json
import logging
import unittest

import pytest
from pydantic import ValidationError

from tilt_solver.config.config import (
    OuterOptions, SolverOptions, configure_logging, parse_solver_name, solver_name,
)
from tilt_solver.config.run_config import RunConfig, load_run_config
from tilt_solver.models import ConstraintMode, SolverKind, TransformKind, WindowSpec


class TestSolverNames(unittest.TestCase):
    """Solver names map onto (kind, warm start) and back."""

    def test_roundtrip(self):
        for name in ("adm", "ladmap", "ladmap-vws", "ladmap-svdws", "ladmap-vws-svdws"):
            kind, warm = parse_solver_name(name)
            assert solver_name(kind, warm) == name

    def test_adm_never_warm(self):
        assert solver_name(SolverKind.ADM, True) == "adm"

    def test_unknown(self):
        with self.assertRaises(ValueError):
            parse_solver_name("newton")


class TestOptions:
    """Tests for SolverOptions and OuterOptions."""

    def test_defaults(self):
        opts = OuterOptions()
        assert opts.inner.rho0 == 2.5
        assert opts.inner.adm_rho == 1.25
        assert opts.inner.eps1 == 1e-7
        assert opts.inner.eps2 == 0.5
        assert opts.tau_tol == 1e-4
        assert opts.constraint_mode is ConstraintMode.CENTER_AREA
        assert opts.solver_name == "ladmap-vws"

    def test_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(rho0=0.5)
        with pytest.raises(ValueError):
            SolverOptions(eps1=0.0)
        with pytest.raises(ValueError):
            OuterOptions(jacobian_gradient="sobel")

    def test_penalty_range(self):
        SolverOptions(mu0=2.0, mu_max=2.0)
        with pytest.raises(ValueError):
            SolverOptions(mu0=2.0, mu_max=1.0)
        with pytest.raises(ValueError):
            SolverOptions(mu_max=0.0)

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("TILT_RHO0", "1.9")
        monkeypatch.setenv("TILT_SOLVER_KIND", "ladmap-svdws")
        monkeypatch.setenv("TILT_TRANSFORM_KIND", "projective")
        monkeypatch.setenv("TILT_WARM_START", "false")
        opts = OuterOptions.from_env()
        assert opts.inner.rho0 == 1.9
        assert opts.transform_kind is TransformKind.PROJECTIVE
        assert opts.solver_name == "ladmap-svdws"

    def test_from_env_divergence_limit(self, monkeypatch):
        assert SolverOptions.from_env().divergence_limit == 1e12
        monkeypatch.setenv("TILT_DIVERGENCE_LIMIT", "1e6")
        assert SolverOptions.from_env().divergence_limit == 1e6

    def test_with_solver_copies(self):
        opts = OuterOptions()
        adm = opts.with_solver("adm")
        assert adm.inner.solver_kind is SolverKind.ADM
        assert opts.inner.solver_kind is SolverKind.LADMAP

    def test_to_dict_is_json(self):
        json.dumps(OuterOptions().to_dict())

    def test_configure_logging_file(self, tmp_path):
        log_file = tmp_path / "run.log"
        configure_logging(OuterOptions(log_level=logging.INFO, log_file=str(log_file)))
        logging.getLogger("tilt_solver").info("hello")
        for handler in logging.getLogger().handlers:
            handler.flush()
        assert "hello" in log_file.read_text()
        configure_logging(OuterOptions())


class TestRunConfig:
    """Tests for RunConfig and config-file merging."""

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            RunConfig(command="range", bogus=1)

    def test_list_parsing(self):
        cfg = RunConfig(command="corruption", levels="0, 0.5,1", solvers="adm,ladmap")
        assert cfg.levels == [0.0, 0.5, 1.0]
        assert cfg.solvers == ["adm", "ladmap"]

    @pytest.mark.parametrize("field,value", [
        ("levels", "0.2,1.5"),
        ("solvers", "adm,newton"),
        ("solver", "newton"),
        ("window", "1,2,3"),
        ("rho0", 0.5),
        ("sizes", "1,10"),
        ("mu_max", 0.0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValidationError):
            RunConfig(command="range", **{field: value})

    def test_window_spec(self):
        assert RunConfig(command="rectify", window="1,2,30,20").window_spec == WindowSpec(1, 2, 30, 20)
        assert RunConfig(command="rectify").window_spec is None

    def test_precedence(self, tmp_path, monkeypatch):
        """CLI > file > environment > defaults."""
        monkeypatch.setenv("TILT_RHO0", "1.1")
        monkeypatch.setenv("TILT_EPS2", "1e-3")
        path = tmp_path / "run.env"
        path.write_text("RHO0=1.5\nSOLVER=adm\nmax-inner-iters=50\n")
        cfg = load_run_config("range", {"rho0": 1.7, "solver": None}, path)
        options = cfg.to_outer_options()
        assert options.inner.rho0 == 1.7
        assert options.inner.max_inner_iters == 50
        assert options.inner.eps2 == 1e-3
        assert options.inner.eps1 == 1e-7
        assert options.solver_name == "adm"

    def test_inverted_penalty_range(self, tmp_path):
        with pytest.raises(ValidationError):
            RunConfig(command="range", mu0=5.0, mu_max=1.0)
        path = tmp_path / "run.env"
        path.write_text("MU0=5\nMU_MAX=1\n")
        with pytest.raises(ValidationError):
            load_run_config("range", {}, path)

    def test_seed_environment_is_a_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TILT_SEED", "11")
        assert load_run_config("range", {}).seed == 11
        path = tmp_path / "run.env"
        path.write_text("SEED=3\n")
        assert load_run_config("range", {"seed": None}, path).seed == 3
        assert load_run_config("range", {"seed": 5}, path).seed == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config("range", {}, tmp_path / "missing.env")

    def test_echo(self, tmp_path):
        cfg = RunConfig(command="speed", seed=7, solver="ladmap-vws-svdws")
        path = cfg.echo(tmp_path / "out")
        payload = json.loads(path.read_text())
        assert payload["rng"] == "numpy.random.PCG64"
        assert payload["config"]["seed"] == 7
        assert payload["options"]["inner"]["solver_kind"] == "ladmap-svdws"
        assert payload["options"]["warm_start"] is True
