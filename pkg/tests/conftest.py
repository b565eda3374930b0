import numpy as np
import pytest

from wgtomo.lattice import CrossSection, SpaceTimeGrid


@pytest.fixture
def tiny_grid():
    return SpaceTimeGrid(0.5, 8, 4, CrossSection(0.5, 6), 1.0, 16, 16, 16)


@pytest.fixture
def small_grid():
    return SpaceTimeGrid(0.5, 16, 8, CrossSection(0.5, 8), 1.0, 32, 32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n].line())
