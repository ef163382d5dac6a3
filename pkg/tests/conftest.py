import numpy as np
import pytest

from ucwave.geometry import GeometryConfig, derive_params
from ucwave.mesh import build_mesh


@pytest.fixture(scope="session")
def cfg51():
    """The standard symmetric-interval geometry of the convergence studies."""
    return GeometryConfig(r=0.75, R=1.0, beta=0.5, eps=0.05, rho_fraction=0.1)


@pytest.fixture(scope="session")
def p51(cfg51):
    return derive_params(cfg51)


@pytest.fixture(scope="session")
def cfg_forward():
    """Forward-interval geometry with the extended horizon T = 2."""
    return GeometryConfig(
        r=0.75, R=1.0, beta=0.5, eps=0.05, rho_fraction=0.1,
        T=2.0, time_interval="forward",
    )


@pytest.fixture(scope="session")
def p_forward(cfg_forward):
    return derive_params(cfg_forward)


@pytest.fixture(scope="session")
def cfg_half():
    """Small geometry with r = 1/2 whose minimal mesh has n_x = 2."""
    return GeometryConfig(r=0.5, R=1.0, beta=0.5, eps=0.05, rho_fraction=0.1)


@pytest.fixture(scope="session")
def p_half(cfg_half):
    return derive_params(cfg_half)


@pytest.fixture(scope="session")
def mesh_small(cfg51, p51):
    return build_mesh(cfg51, p51, 8, 4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
