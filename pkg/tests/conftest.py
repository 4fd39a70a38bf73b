import numpy as np
import pytest

from previewtrack.lti import default_plant, zoh_discretize
from previewtrack.ssid import default_pools

TS = 0.02


@pytest.fixture(scope="session")
def plant_d():
    return zoh_discretize(default_plant(), TS)


@pytest.fixture(scope="session")
def pools(plant_d):
    return default_pools(plant_d)


@pytest.fixture(scope="session")
def bin_omegas():
    return 2.0 * np.pi * np.arange(1, 31) / 60.0
