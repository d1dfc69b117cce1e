import numpy as np
import pytest

from apgm.dual_pgm import QpProblem


@pytest.fixture
def worked():
    """H = 2I, G = (-2, -2), A = I, B = (0.5, 0.5); optimum xi = (0.5, 0.5), mu = (1, 1)."""
    return QpProblem(np.diag([2.0, 2.0]), [-2.0, -2.0], np.eye(2), [0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
