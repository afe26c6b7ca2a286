import numpy as np
import pytest

from fractrace import geometry as G
from fractrace import whitney as W


@pytest.fixture(scope="session")
def interval():
    return G.unit_interval()


@pytest.fixture(scope="session")
def square():
    return G.unit_square()


@pytest.fixture(scope="session")
def disk():
    return G.unit_disk()


@pytest.fixture(scope="session")
def lshape():
    return G.l_shape()


@pytest.fixture(scope="session")
def all_domains(interval, square, disk, lshape):
    return {"interval": interval, "square": square, "disk": disk,
            "lshape": lshape}


@pytest.fixture(scope="session")
def disk_interior_7(disk):
    return W.cached_decompose(disk, "interior", 7)


@pytest.fixture(scope="session")
def disk_exterior_7(disk):
    return W.cached_decompose(disk, "exterior", 7)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240831)
