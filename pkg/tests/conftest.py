import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oodcombine.scores import ID_ORIGIN, ScoreMatrix

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_matrix(values, origin=ID_ORIGIN, names=None, prefix="r"):
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n, d = values.shape
    names = names or tuple(f"s{i + 1}" for i in range(d))
    return ScoreMatrix(tuple(names), values, tuple(f"{prefix}{i}" for i in range(n)), (origin,) * n)


@pytest.fixture
def matrix_factory():
    return make_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
