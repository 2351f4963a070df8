import numpy as np
import pytest

import switchstab as ss

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def _record(line: str):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _record


def make_benchmark():
    """Two scalar contracting modes dx = -rate x + d with shared V = x^2."""
    A = [np.array([[-1.0]]), np.array([[-3.0]])]
    B = [np.eye(1), np.eye(1)]
    sys = ss.make_linear_system(A, B)
    fam = ss.LyapunovFamily.quadratic([np.eye(1), np.eye(1)], (1.0, 3.0),
                                      ss.PowerGain(1.0, 2.0))
    params = ss.UHParams(T=1.0, q=np.array([0.5, 0.5]))
    return sys, fam, params


def make_control_benchmark():
    """Open-loop unstable variant dx = +a x + d + u with the same family."""
    A = [np.array([[1.0]]), np.array([[0.5]])]
    B = [np.eye(1), np.eye(1)]
    G = [np.eye(1), np.eye(1)]
    sys = ss.make_linear_system(A, B, G)
    fam = ss.LyapunovFamily.quadratic([np.eye(1), np.eye(1)], (1.0, 3.0),
                                      ss.PowerGain(1.0, 2.0))
    return sys, fam


@pytest.fixture
def benchmark():
    return make_benchmark()


@pytest.fixture
def control_benchmark():
    return make_control_benchmark()
