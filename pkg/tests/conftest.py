import math

import numpy as np
import pytest

from cgllab.grid import Grid


@pytest.fixture(scope="session")
def grid3():
    return Grid(3, 64, 60.0)


@pytest.fixture(scope="session")
def grid4():
    return Grid(4, 32, 40.0)


@pytest.fixture
def small3():
    return Grid(3, 16, 2 * math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field_values(grid, rng):
    return rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
