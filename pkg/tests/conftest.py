import numpy as np
import pytest

from qmresolvent.instances import make_rng, random_quasimetric
from qmresolvent.space import KernelMatrix, MeasureSpace


def brute_kappa(d):
    """Plain triple loop, independent of the vectorized scan."""
    n = len(d)
    best = -1.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                den = d[i][k] + d[k][j]
                if den == 0:
                    continue
                best = max(best, d[i][j] / den)
    return best


def ones_kernel(n=2, w=0.2):
    return KernelMatrix(np.ones((n, n))), MeasureSpace(np.full(n, w))


def scalar_kernel(k=1.0, w=0.5):
    return KernelMatrix(np.array([[k]])), MeasureSpace(np.array([w]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance():
    K, omega = random_quasimetric(make_rng(3, 0), 12, "power")
    return K, omega


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
