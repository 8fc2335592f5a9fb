"""Shared Ramsey solutions; each configuration is solved once per session."""
import functools
import time

import pytest

from inattention.nkmodel import ModelParams
from inattention.ramsey import GridSpec, solve_policy

SMALL_GRID = GridSpec(n_knots=7, n_quad=3)


@functools.lru_cache(maxsize=None)
def cached_policy(gamma: float, elb_on: bool, small: bool = False, tol: float = 1e-7):
    grid = SMALL_GRID if small else GridSpec()
    t0 = time.perf_counter()
    sol = solve_policy(ModelParams(), gamma, grid, tol=tol, elb_on=elb_on)
    sol.policy["solve_seconds"] = time.perf_counter() - t0
    return sol


@pytest.fixture(scope="session")
def policy():
    return cached_policy


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
