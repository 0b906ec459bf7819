import math

import numpy as np
import pytest

from obbkit.geom import canonicalize

ACCEPTANCE_LINES = []


def random_box(rng, center=(-50, 50), extent=(1, 60)):
    return canonicalize(
        *rng.uniform(*center, size=2),
        *rng.uniform(*extent, size=2),
        rng.uniform(-2 * math.pi, 2 * math.pi),
    )


def angle_diff(a, b, period=math.pi):
    d = math.fmod(abs(a - b), period)
    return min(d, period - d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
