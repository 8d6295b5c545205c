import numpy as np
import pytest

from l2kl.model import NormalModel


def central_diff(fn, theta, step=1e-6):
    """Central-difference derivative of ``fn`` along each coordinate of
    ``theta``; the last axis of the result indexes the coordinate."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for i in range(theta.size):
        h = step * (1.0 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        cols.append((np.asarray(fn(theta + e)) - np.asarray(fn(theta - e))) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def normal():
    return NormalModel()


@pytest.fixture(scope="session")
def big_normal_sample():
    return np.random.default_rng(2024).standard_normal(100_000)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
