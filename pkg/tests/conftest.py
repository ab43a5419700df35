import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochgaze.grid import GridShape

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid77():
    return GridShape(1, 7, 7)


def random_dist(rng, shape=(1, 7, 7), sparsity=0.0):
    """Random distribution, optionally with exact zeros."""
    w = rng.gamma(0.5, size=shape)
    if sparsity:
        w[rng.random(shape) < sparsity] = 0.0
        if not w.any():
            w.flat[0] = 1.0
    return w / w.sum()


# acceptance results, filled by test_acceptance and printed at session end
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
