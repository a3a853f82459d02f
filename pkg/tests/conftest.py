import functools

import numpy as np
import pytest

from tvfluid import scenario as scn
from tvfluid.solver import solve

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def bundled(name):
    return scn.load_bundled(name)


@functools.lru_cache(maxsize=None)
def solved(name, h=0.01):
    sc = bundled(name)
    return solve(sc.initial, sc.rate, sc.F, sc.G, sc.solver_config(h))


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
