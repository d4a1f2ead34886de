import numpy as np
import pytest

from mflab.engine import ModelSpec
from mflab.games import RPS, builtin_game, matrix_game
from mflab.protocols import ProtocolSpec

# (criterion, passed, detail) rows from test_acceptance, printed at session end
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rps():
    return matrix_game(RPS)


@pytest.fixture
def rps_smith():
    return ModelSpec(builtin_game("rps"), ProtocolSpec("smith", 4.0))


def random_simplex(rng, size, n):
    return rng.dirichlet(np.ones(n), size=size)
