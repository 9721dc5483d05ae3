import numpy as np
import pytest

from lepf.hmm import FiniteHmm


@pytest.fixture
def two_state():
    return FiniteHmm([0.3, 0.7], [[0.9, 0.1], [0.2, 0.8]], [1.0, 2.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
