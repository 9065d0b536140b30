import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from floquet_bergman.geometry import PeriodicCell  # noqa: E402
from floquet_bergman.multiplier import MultiplierFamily  # noqa: E402


@pytest.fixture(scope="session")
def family():
    return MultiplierFamily.certify()


@pytest.fixture(scope="session")
def family6():
    """Coarser quadrature, used where many cell solves are needed."""
    return MultiplierFamily.certify(cell=PeriodicCell(order=6), fit=False)


@pytest.fixture(scope="session")
def cell(family):
    return family.cell
