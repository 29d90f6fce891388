"""Shared fixtures; collects acceptance verdicts for the terminal summary."""

import numpy as np
import pytest

from lipcausal import zoo

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[0].split("[")[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def minkowski3():
    return zoo.minkowski_field(3)


@pytest.fixture(scope="session")
def conformal3():
    return zoo.conformal_field(0.2, 3)


@pytest.fixture(scope="session")
def rosen():
    return zoo.rosen_wave_field()


ROSEN_X0 = np.array([-0.1, -0.1, 0.05, 0.0])
ROSEN_V0 = np.array([1.0, 0.3, 0.2, 0.1])
