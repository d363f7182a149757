import pytest

from breatherlab.core import natural_units
from breatherlab.residuals import patch_grid

SPACINGS = (0.1, 0.05, 0.025)
PATCH_CENTER = {"t": 0.3, "x": 0.7, "y": 0.5, "z": 0.3}
PATCH_HALF = {k: 0.2 for k in PATCH_CENTER}


@pytest.fixture
def nat():
    return natural_units()


@pytest.fixture(scope="session")
def patches():
    """4D (t, x, y, z) patches off the breather centre at three spacings."""
    return [patch_grid(PATCH_CENTER, PATCH_HALF, h) for h in SPACINGS]


@pytest.fixture(scope="session")
def radial_patches():
    center = {"t": 0.4, "r": 1.1}
    half = {"t": 0.2, "r": 0.4}
    return [patch_grid(center, half, h) for h in SPACINGS]
