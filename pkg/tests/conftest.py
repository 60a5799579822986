import numpy as np
import pytest
from hypothesis import settings

from mesovortex.geometry import DomainSpec, build_grid, pinning_field

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


def disc(nx=32, a=0.5, R=0.5):
    grid = build_grid(DomainSpec(a=a, inclusion_radius=R, nx=nx, ny=nx))
    return grid, pinning_field(grid)


@pytest.fixture(scope="session")
def disc32():
    return disc(32)


@pytest.fixture(scope="session")
def disc64():
    return disc(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
