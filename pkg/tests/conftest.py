import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from depthcsp import Composition, ForceField, Species, UnitCell, bundled_structure, default_forcefield

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SR = Species("Sr", 2, 1.0)
TI = Species("Ti", 4, 0.5)
O = Species("O", -2, 0.9)
Y = Species("Y", 3, 0.9)


def srtio3(z=1):
    return Composition(((SR, 1), (TI, 1), (O, 3)), z)


@pytest.fixture(scope="session")
def ff() -> ForceField:
    return default_forcefield()


@pytest.fixture(scope="session")
def perovskite():
    return bundled_structure()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cubic6():
    return UnitCell.cubic(6.0)
