import numpy as np
import pytest

from bridgelab.sampling import PathBatch

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def deterministic_batch(grid, alpha, martingale):
    """PathBatch built from a known martingale part M (X = (1-t)^alpha M)."""
    mart = np.atleast_2d(np.asarray(martingale, dtype=float))
    env = np.ones(len(grid)) if alpha == 0 else np.exp(alpha * grid.log_gap)
    return PathBatch(grid, mart * env, alpha, 0, "exact", mart)
