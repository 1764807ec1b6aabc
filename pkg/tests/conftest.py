import functools

import numpy as np
import pytest

from djcg.determinants import eigenstate_record
from djcg.model import ModelParams, Rep
from djcg.qbe import solve_sector
from djcg.verify import random_model


@functools.lru_cache(maxsize=None)
def _states(key, M):
    return tuple(solve_sector(MODELS[key], M, Rep.PARTICLE))


@functools.lru_cache(maxsize=None)
def _records(key, M):
    return tuple(eigenstate_record(MODELS[key], st) for st in _states(key, M))


MODELS = {
    "jc": ModelParams.spin_boson([1.0], omega=1.0, V=0.5),
    "sb2": random_model(2),
    "sb3": random_model(3),
    "sb4": random_model(4),
    "so2": random_model(2, realization="spin_only"),
    "so3": random_model(3, realization="spin_only"),
    "so4": random_model(4, realization="spin_only"),
    "so4_neg": random_model(4, realization="spin_only", g=-0.6),
    "sb3_neg": random_model(3, V=-0.9),
}


class Solved:
    """Lazy, cached access to solved sectors of the shared test models."""

    def params(self, key):
        return MODELS[key]

    def states(self, key, M):
        return list(_states(key, M))

    def records(self, key, M):
        return list(_records(key, M))


@pytest.fixture(scope="session")
def solved():
    return Solved()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
