import numpy as np
import pytest

from fracdecay.grid import make_grid
from fracdecay.model import ModelSpec, SymbolSpec, PotentialSpec


@pytest.fixture(scope="session")
def reference_model():
    """Desk reference: p0 = xi^2 (m = k = 1), V = <x>^-1."""
    return ModelSpec(SymbolSpec("power", 1), PotentialSpec("repulsive", 1.0, 1.0))


@pytest.fixture(scope="session")
def free_model():
    return ModelSpec(SymbolSpec("power", 1), PotentialSpec("zero"))


@pytest.fixture(scope="session")
def attractive_model():
    return ModelSpec(SymbolSpec("power", 1), PotentialSpec("attractive", 2.0, 1.0))


@pytest.fixture(scope="session")
def grid128():
    return make_grid(1, 64.0, 128)


@pytest.fixture(scope="session")
def grid128_fine():
    """Small box for oracle tests that need resolved potentials (xi_max ~ 25)."""
    return make_grid(1, 16.0, 128)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
