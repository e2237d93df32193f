import math

import pytest

from lcreadout.config import load_config

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def device():
    return load_config()


@pytest.fixture(scope="session")
def resonator(device):
    return device.readout.resonator


@pytest.fixture(scope="session")
def kappa_ang(resonator):
    return 2.0 * math.pi * resonator.kappa_hz


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
