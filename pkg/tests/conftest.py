import numpy as np
import pytest

from sbmrom.assembly import ProblemConfig
from sbmrom.geometry import GeometryParams, build_surrogate
from sbmrom.mesh import assemble_mass, generate_structured

CHANNEL_RECT = (-2.0, 2.0, -1.0, 1.0)


@pytest.fixture(scope="session")
def channel_mesh():
    """Coarse channel mesh shared by assembly-level tests."""
    return generate_structured(CHANNEL_RECT, 48, 24)


@pytest.fixture(scope="session")
def channel_mass(channel_mesh):
    return assemble_mass(channel_mesh)


@pytest.fixture(scope="session")
def circle_surrogate(channel_mesh):
    geom = GeometryParams(kind="circle", mu=(-1.5, 0.0), radius=0.2)
    return build_surrogate(channel_mesh, geom)


@pytest.fixture(scope="session")
def default_cfg():
    return ProblemConfig()


def rng(seed=0):
    return np.random.default_rng(seed)
