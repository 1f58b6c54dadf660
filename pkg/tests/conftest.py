import os
import time

import pytest

from qcm import simulation

REPS = int(os.environ.get("QCM_ACCEPT_REPS", "100"))
LENGTH = 1000
SEED = 0

_campaigns = {}
_verdicts = []


def get_campaign(dgp, case):
    """Session cache: each (process, case) cell is simulated once."""
    key = (dgp, case)
    if key not in _campaigns:
        t0 = time.perf_counter()
        camp = simulation.run_campaign(dgp, case, reps=REPS, T=LENGTH, seed=SEED, threads=1,
                                       also_enforce=(case == 4))
        _campaigns[key] = (camp, time.perf_counter() - t0)
    return _campaigns[key]


@pytest.fixture(scope="session")
def campaign():
    return get_campaign


@pytest.fixture(scope="session")
def verdict():
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _verdicts.append((n, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_verdicts):
            terminalreporter.write_line(line)
