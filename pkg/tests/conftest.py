import numpy as np
import pytest

from dopt import _accel
from dopt.kernels import _jit

BACKENDS = ["numba", "numpy"] if _jit is not None else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel implementation."""
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, m, rank=None):
    G = rng.standard_normal((m, rank or m))
    return G @ G.T


def random_spd(rng, m):
    G = rng.standard_normal((m, m))
    return G @ G.T + m * 1e-2 * np.eye(m)


@pytest.fixture
def record_criterion(request):
    """Store a PASS/FAIL line for the acceptance summary."""
    store = request.config.stash.setdefault(_KEY, {})

    def record(number, passed, detail):
        store[number] = (passed, detail)

    return record


_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        passed, detail = store[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
