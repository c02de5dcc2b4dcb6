import numpy as np
import pytest

from nlflux.geometry import build_grid, shape_from_spec
from nlflux.kernels import make_kernel
from nlflux.operators import assemble_diffusion, assemble_flux


@pytest.fixture(scope="session")
def interval_geo():
    shape = shape_from_spec({"kind": "interval", "a": 0.0, "b": 1.0})
    return build_grid(shape, d=0.25, h_grid=0.05)


@pytest.fixture(scope="session")
def interval_kernel():
    return make_kernel("uniform", 0.25, 1)


@pytest.fixture(scope="session")
def interval_op(interval_geo, interval_kernel):
    return assemble_diffusion(interval_geo, interval_kernel)


@pytest.fixture(scope="session")
def interval_flux(interval_geo, interval_kernel):
    return assemble_flux(interval_geo, interval_kernel)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
