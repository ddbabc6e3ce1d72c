"""Shared fixtures: expensive solves and MOP pairs are computed once per session."""

import time

import pytest

from nikishin.equilibrium import builtin_problem, solve_equilibrium
from nikishin.hp_numerics import PrecisionContext
from nikishin.nikishin_mop import compute_pair, norm_integrals, pollaczek_system, reference_equilibrium

MOP_N = (1, 2, 4, 8, 12, 16)
MOP_BITS = 1024

_ACCEPTANCE = []


class Timed:
    """Value plus the wall time it took to produce."""

    def __init__(self, fn):
        t = time.perf_counter()
        self.value = fn()
        self.seconds = time.perf_counter() - t


@pytest.fixture(scope="session")
def pollaczek():
    return pollaczek_system()


@pytest.fixture(scope="session")
def solved():
    """Curve-normalised Bessel and Pollaczek problems at 500 cells per side."""
    out = {}
    for name in ("bessel", "pollaczek"):
        p = builtin_problem(name, n_plus=500)
        out[name] = Timed(lambda p=p: solve_equilibrium(p))
    return out


@pytest.fixture(scope="session")
def mop_pairs(pollaczek):
    ctx = PrecisionContext(MOP_BITS)
    return {n: Timed(lambda n=n: compute_pair(pollaczek, n, ctx)) for n in MOP_N}


@pytest.fixture(scope="session")
def mop_norms(pollaczek, mop_pairs):
    ctx = PrecisionContext(MOP_BITS)
    return {n: norm_integrals(pollaczek, t.value, ctx) for n, t in mop_pairs.items()}


@pytest.fixture(scope="session")
def mop_reference(pollaczek):
    return reference_equilibrium(pollaczek, 500)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
