import numpy as np
import pytest

from kronfuse.dataset import AdjacencyMatrix, synthesize
from kronfuse.kernels import KernelConfig, build_catalog


def random_psd(rng, n, scale=1.0):
    X = rng.standard_normal((n, n + 2))
    K = X @ X.T / (n + 2)
    return scale * 0.5 * (K + K.T)


def random_binary(rng, n, m, density=0.3):
    F = (rng.random((n, m)) < density).astype(np.int8)
    # keep every row and column nondegenerate so every kernel kind is informative
    F[np.arange(n), rng.integers(0, m, n)] = 1
    F[rng.integers(0, n, m), np.arange(m)] = 1
    return AdjacencyMatrix.from_array(F)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_30x20():
    return synthesize(30, 20, 3, 0.2, seed=0)


@pytest.fixture(scope="session")
def catalog_v4(synthetic_30x20):
    return build_catalog(synthetic_30x20, KernelConfig(("gip", "cos"), ("gip", "ntk")))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
