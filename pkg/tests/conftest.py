import numpy as np
import pytest

from netgame import Bernoulli, Box, Constant, GameSpec, NetworkModel, QuadraticCost

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def two_cycle_game(q=1.0, a=0.5, b=-1.0):
    net = NetworkModel(2, [[None, Constant(1.0)], [Constant(1.0), None]], 1.0)
    return GameSpec(2, 1, Box([0.0], [1.0]), QuadraticCost(q, a, b), net)


def random_game(N=50, p=0.5, pbar=0.7, q=1.0, a=0.5, b=-1.0, n=1):
    net = NetworkModel(N, Bernoulli(p), pbar)
    return GameSpec(N, n, Box(np.zeros(n), np.ones(n)), QuadraticCost(q, a, b), net)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
