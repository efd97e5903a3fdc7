import time

import numpy as np
import pytest

from ancestral_rl.harness import run_experiment, shipped_config

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tableau_runs():
    """Records of the three shipped two-state configs, run once per session, plus total seconds."""
    start = time.perf_counter()
    runs = {algo: run_experiment(shipped_config(f"two_state_{algo}")) for algo in ("arl", "zoo", "poga")}
    runs["seconds"] = time.perf_counter() - start
    return runs
