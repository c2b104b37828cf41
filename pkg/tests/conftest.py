import numpy as np
import pytest

from semtree import _kernels_py
from semtree.tree import TreeTopology


def _compiled():
    try:
        from semtree import _kernels
    except ImportError:
        return None
    return _kernels


COMPILED = _compiled()
BACKENDS = [pytest.param(_kernels_py, id="python")] + (
    [pytest.param(COMPILED, id="cython")] if COMPILED is not None else []
)


@pytest.fixture
def five_leaf():
    """I0 -> (I1, I2), I1 -> (I3, L2), I3 -> (L0, L1), I2 -> (L3, L4)."""
    return TreeTopology([1, 3, -4, -1], [2, -3, -5, -2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def off_boundary(rng, A, b, count, d, margin=1e-6, scale=2.0):
    """Random inputs whose every hyperplane margin is at least ``margin``."""
    out = []
    while len(out) < count:
        x = rng.uniform(-scale, scale, size=(4 * count, d))
        u = x @ A.T + b
        ok = np.all(np.abs(u) > margin, axis=1) if A.shape[0] else np.ones(len(x), bool)
        out.extend(x[ok])
    return np.array(out[:count])


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
