from __future__ import annotations

import numpy as np
import pytest

from zodiac.graph import build_laplacian, path_graph
from zodiac.problems import gen_dataset, gen_quadratic, partition_dataset


@pytest.fixture
def small_dataset():
    return partition_dataset(gen_dataset(d=8, n_train=60, n_test=20, seed=3), n_agents=3, seed=3)


@pytest.fixture
def quad4():
    return gen_quadratic(n=4, p=3, condition=5.0, seed=1)


@pytest.fixture
def path2():
    return build_laplacian(path_graph(2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion for the terminal summary."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, passed: bool, detail: str) -> bool:
        store[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
