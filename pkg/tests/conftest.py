import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sgbp.experiments import potts_grid_plan, reference_fixed_point  # noqa: E402


@pytest.fixture(scope="session")
def grid4():
    return potts_grid_plan(4)


@pytest.fixture(scope="session")
def grid4_star(grid4):
    return reference_fixed_point(grid4)


@pytest.fixture(scope="session")
def grid2():
    return potts_grid_plan(2)


@pytest.fixture(scope="session")
def grid2_star(grid2):
    return reference_fixed_point(grid2)
