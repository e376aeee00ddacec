import numpy as np
import pytest

from ibplab import Parameters

# acceptance criterion id -> list of (label, passed, detail)
CRITERIA: dict[int, list] = {}


def record(criterion: int, label: str, passed: bool, detail: str = "") -> None:
    CRITERIA.setdefault(criterion, []).append((label, bool(passed), detail))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params():
    return Parameters(alpha=2.0, beta=0.5, theta=1.0, w=0.8, iota=0.3)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(CRITERIA):
        for label, ok, detail in CRITERIA[cid]:
            tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid:>2}: {label}"
                          + (f" | {detail}" if detail else ""))
