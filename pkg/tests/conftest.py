import numpy as np
import pytest

from perlyap import CocycleSpec, FullShift, ToralAutomorphism


@pytest.fixture(scope="session")
def cat():
    return ToralAutomorphism([[2, 1], [1, 1]])


@pytest.fixture(scope="session")
def shift2():
    return FullShift(2)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def rot_cocycle():
    """The d=2 twisted-rotation instance used throughout the regressions."""
    return CocycleSpec(2, "diag_rotation", {"c": [0.7, -0.7], "a": [1, 0], "b": 0.0})


@pytest.fixture(scope="session")
def const_diag():
    return CocycleSpec(2, "constant", {"matrix": [[2.0, 0.0], [0.0, 0.5]]})


@pytest.fixture(scope="session")
def cat_derivative(cat):
    return CocycleSpec(2, "derivative", {"matrix": cat.matrix.astype(float)})


@pytest.fixture(scope="session")
def identity2():
    return CocycleSpec(2, "constant", {"matrix": np.eye(2)})
