import time

import pytest

from rhmpc.config import build, default_setup, merge_config
from rhmpc.plant import run_closed_loop

#: Wall-clock seconds spent building each shared closed-loop trace.
TRACE_SECONDS = {}

#: Acceptance outcomes, filled by ``tests/test_acceptance.py``: number -> (title, passed, detail).
CRITERIA = {}


def _timed(name, fn):
    start = time.perf_counter()
    out = fn()
    TRACE_SECONDS[name] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def setup():
    return default_setup()


@pytest.fixture(scope="session")
def pid_trace(setup):
    return _timed("pid", lambda: run_closed_loop(setup.plant, setup.controller("pid"), setup.scenario,
                                                 setup.dt_sample))


@pytest.fixture(scope="session")
def rmpc_trace(setup):
    return _timed("rmpc", lambda: run_closed_loop(setup.plant, setup.controller("rmpc"), setup.scenario,
                                                  setup.dt_sample))


@pytest.fixture(scope="session")
def rmpc_no_ci_trace():
    s = build(merge_config({"ci": {"K_I": [0.0, 0.0]}}))
    return _timed("rmpc_no_ci", lambda: run_closed_loop(s.plant, s.controller("rmpc"), s.scenario, s.dt_sample))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
