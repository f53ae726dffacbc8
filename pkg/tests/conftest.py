import numpy as np
import pytest

from treemvs import _backend
from treemvs.coefficients import Constant, Geometric
from treemvs.config import BoundaryData, Polynomial, SystemConfig

BACKENDS = ["python"] + (["cython"] if _backend.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def demo():
    """Solvable two-board system: beta 1/4, geometric couplings, f(t)=t, g(t)=1-t."""
    geo = Geometric(0.5, 0.5)
    cfg = SystemConfig.two_board(2, geo, geo, Constant(0.25), Constant(0.25))
    return cfg, BoundaryData((Polynomial((0.0, 1.0)), Polynomial((1.0, -1.0))))


@pytest.fixture
def directed():
    """The same couplings with beta = 0, constant data 0 and 1."""
    geo = Geometric(0.5, 0.5)
    return SystemConfig.two_board(2, geo, geo), BoundaryData.constants(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting --------------------------------------------------

ACCEPTANCE = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, text)`` records one pass/fail line for the summary."""

    def record(n, ok, text):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {text}"
        ACCEPTANCE.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE, key=lambda t: t[0]):
            terminalreporter.write_line(line)
