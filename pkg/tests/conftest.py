import numpy as np
import pytest

from choquard_lattice import _backend
from choquard_lattice.functional import build_problem

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def problem_1d(cache_dir):
    """The one-dimensional acceptance problem: L=8, s=0.5, p=2, alpha=0.5, tau=2.5."""
    return build_problem(1, 8, 0.5, 2.0, 0.5, 2.5, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def problem_small(cache_dir):
    """d=1, L=4 with p=2."""
    return build_problem(1, 4, 0.5, 2.0, 0.5, 2.5, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def problem_p3(cache_dir):
    """d=2, L=3 with p=3."""
    return build_problem(2, 3, 0.5, 3.0, 1.0, 3.5, cache_dir=cache_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
