import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("caffine", deadline=None, max_examples=25, print_blob=True)
settings.load_profile("caffine")


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def random_unimodular(rng, size: int) -> np.ndarray:
    """Well-conditioned matrix with determinant one."""
    while True:
        M = np.eye(size) + 0.4 * rng.standard_normal((size, size))
        d = np.linalg.det(M)
        if abs(d) > 0.3 and np.linalg.cond(M) < 20:
            if d < 0:
                M[:, 0] *= -1
                d = -d
            return M / d ** (1.0 / size)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
