import math

import pytest

from nmcavity.model import CavityParams

G0 = 0.01


@pytest.fixture
def p165():
    """Intermediate regime: sqrt(2) gamma0 < lam < 2 gamma0."""
    return CavityParams(G0, 1.65 * G0)


@pytest.fixture
def p07_far():
    return CavityParams(G0, 0.7 * G0, 1.0, math.inf)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
