import numpy as np
import pytest

from spinfreeze.engine import GridSpec
from spinfreeze.specfun import find_first_peak


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def small_grid():
    # same k spacing as the default grid, coarser in z and v
    return GridSpec(nz=1024, nv=96)


@pytest.fixture(scope="session")
def x_peak():
    return find_first_peak(2).x_peak


@pytest.fixture
def rng():
    return np.random.default_rng(20240515)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    lines = sorted(getattr(test_acceptance, "RESULTS", []), key=lambda s: int(s.split()[1][:-1]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
