import numpy as np
import pytest

from lattice_kreg.core.logging_utils import memory_log_handler
from lattice_kreg.services.kernel import make_kernel
from lattice_kreg.services.lattice import make_lattice


@pytest.fixture(autouse=True)
def _clear_memory_logs():
    memory_log_handler.clear()
    yield
    memory_log_handler.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def box1():
    return make_kernel("box", 1)


@pytest.fixture
def epan2():
    return make_kernel("epanechnikov-normalized", 2)


@pytest.fixture
def lattice_8x8():
    return make_lattice(8, 2)
