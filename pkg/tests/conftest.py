import os

# Keep BLAS pools out of the way before numpy loads (mirrors drtune._env;
# needed here because pytest may import test modules before the package).
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

import drtune
from drtune import make_spec


def pytest_report_header(config):
    return f"drtune backend: {drtune.active_backend()} (compiled available: {drtune.have_compiled()})"


@pytest.fixture(scope="session")
def cartpole_spec():
    return make_spec("cartpole")


@pytest.fixture(scope="session")
def pointmass_spec():
    return make_spec("pointmass")


def available_backends():
    backends = ["python"]
    if drtune.have_compiled():
        backends.append("compiled")
    return backends


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
