import functools

import numpy as np
import pytest

from stokes_control.optimizer import pdas_solve
from stokes_control.verify import setup, setup_level

# one line per acceptance criterion, printed in the terminal summary
CRITERIA = {}


def record(key, passed, detail):
    CRITERIA[key] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k.split()[0])):
        passed, detail = CRITERIA[key]
        tr.write_line("{} criterion {}: {}".format(
            "PASS" if passed else "FAIL", key, detail))


@functools.lru_cache(maxsize=None)
def cached_setup(example, n):
    return setup(example, n)


@functools.lru_cache(maxsize=None)
def cached_level(example, level):
    return setup_level(example, level)


@functools.lru_cache(maxsize=None)
def cached_solution(example, level):
    st = cached_level(example, level)
    return st, pdas_solve(st.data, st.spaces, st.ops, ddata=st.ddata)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
