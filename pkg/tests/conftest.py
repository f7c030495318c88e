import functools
import warnings

import pytest

from bellforge.moments import FULL_CORRELATORS
from bellforge.nonlinear import derive


@functools.lru_cache(maxsize=None)
def _derived(name, restriction=FULL_CORRELATORS, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return derive(name, restriction, **kw)


@pytest.fixture(scope="session")
def derived():
    """Cached ``derive`` results shared by all test modules."""
    return _derived


@functools.lru_cache(maxsize=None)
def _gns_bilocal_half():
    from bellforge.nonsignalling import gns_system, gns_vertices

    return gns_system("bilocal22", "A=1/2,C=1/2"), gns_vertices("bilocal22", "A=1/2,C=1/2")


@pytest.fixture(scope="session")
def gns_bilocal_half():
    """GNS system and vertices of bilocal22 with every A and C marginal fixed to 1/2."""
    return _gns_bilocal_half()


ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def criterion():
    """``record(n, ok, detail)``; the lines are printed in the terminal summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
