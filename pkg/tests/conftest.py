import sys

import numpy as np
import pytest

from platelab.elasticity import ElasticModel
from platelab.grid import Grid2D


@pytest.fixture
def grid17():
    return Grid2D.square(17, 0.5)


@pytest.fixture
def grid33():
    return Grid2D.square(33, 0.5)


@pytest.fixture
def model():
    return ElasticModel(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
