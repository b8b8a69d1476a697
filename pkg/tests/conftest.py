"""Configuration for pytest."""
import os

import numpy as np
import pytest

from tilt_solver.config.config import OuterOptions, SolverOptions
from tilt_solver.imaging import gen_checkerboard, make_rng
from tilt_solver.models import JacobianMatrix, WindowSpec
from tilt_solver.projector import Projector


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full rectification runs (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    """Seeded generator shared by the numeric tests."""
    return make_rng(1234)


@pytest.fixture
def small_instance(rng):
    """Unit-norm 12x10 patch with a Gaussian 6-column Jacobian."""
    d = rng.uniform(size=(12, 10))
    d /= np.linalg.norm(d)
    jac = JacobianMatrix(rng.standard_normal((120, 6)), d.shape)
    return d, jac


@pytest.fixture
def small_projector(small_instance):
    """Unconstrained projector for the small instance."""
    _, jac = small_instance
    return Projector.build(jac)


@pytest.fixture
def fast_solver_options():
    """Inner options that keep the iteration counts small."""
    return SolverOptions(rho0=1.5, eps1=1e-6, eps2=1e-4, max_inner_iters=2000)


@pytest.fixture
def quiet_options(fast_solver_options):
    """Outer options without a progress bar."""
    return OuterOptions(max_outer_iters=40, inner=fast_solver_options, show_progress=False)


@pytest.fixture
def deformed_checkerboard():
    """Checkerboard under a 5 degree rotation with its centred 48x48 window."""
    image = gen_checkerboard(cells=8, cell_px=12, theta=np.deg2rad(5.0), t=0.0)
    window = WindowSpec.centered(image.pixels.shape, 48, 48)
    return image, window


@pytest.fixture(autouse=True)
def clean_tilt_env(monkeypatch):
    """Keep TILT_* variables from the developer's shell out of the tests."""
    for key in list(os.environ):
        if key.startswith("TILT_"):
            monkeypatch.delenv(key, raising=False)
