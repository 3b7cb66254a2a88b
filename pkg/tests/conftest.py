import numpy as np
import pytest

from kpls.data import preprocess
from kpls.kernels import KernelSpec


def random_dataset(rng, n, d=2, sigma=None, noise=0.1):
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = np.sin(2.0 * X[:, 0]) + noise * rng.standard_normal(n)
    spec = KernelSpec.gaussian(sigma if sigma is not None else rng.uniform(0.5, 1.5))
    return preprocess(X, y), spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_point():
    """X = {0, 2}, gaussian sigma 1, y = (-1, 1)."""
    return preprocess(np.array([[0.0], [2.0]]), np.array([1.0, 3.0])), KernelSpec.gaussian(1.0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
