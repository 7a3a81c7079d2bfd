import numpy as np
import pytest
from hypothesis import settings

from acoustoelectric.mesh import ScalarField, build_rect_mesh
from acoustoelectric.solver import SolverConfig

settings.register_profile("fem", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("fem")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


@pytest.fixture(scope="session")
def unit_mesh():
    return build_rect_mesh(0.0, 1.0, 0.0, 1.0, 8, 8)


@pytest.fixture(scope="session")
def head_mesh():
    return build_rect_mesh(0.1, 0.9, 0.0, 1.0, 16, 20)


@pytest.fixture
def tight():
    return SolverConfig(tol_rel=1e-12)


def ones(mesh):
    return ScalarField(mesh, np.ones(mesh.n_nodes))


def smooth_sigma(mesh, amp=0.5):
    x, y = mesh.nodes.T
    return ScalarField(mesh, 1.0 + amp * np.sin(3 * x) * np.cos(2 * y) ** 2)
