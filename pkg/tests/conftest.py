import sys

import numpy as np
import pytest

from ailboost.harness.envs import toggle2
from ailboost.mdp import MarkovPolicy, TabularMdp

STAY, GO = 0, 1


@pytest.fixture
def toggle():
    return toggle2(0.5)


@pytest.fixture
def always_go():
    return MarkovPolicy.deterministic([GO, GO], 2)


@pytest.fixture
def always_stay():
    return MarkovPolicy.deterministic([STAY, STAY], 2)


def random_mdp(rng, S, A, gamma=None, reward=False):
    P = rng.dirichlet(np.full(S, 0.5), size=(S, A))
    mu = rng.dirichlet(np.ones(S))
    g = float(rng.uniform(0.3, 0.98)) if gamma is None else gamma
    r = rng.normal(size=(S, A)) if reward else None
    return TabularMdp(P, g, mu, r)


def random_policy(rng, S, A):
    return MarkovPolicy(rng.dirichlet(np.ones(A), size=S))


def within_3se(samples, target):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(samples.mean() - target) <= 3 * se


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    module = sys.modules.get("test_acceptance")
    if module is not None and module.LINES:
        terminalreporter.section("acceptance criteria")
        for line in module.LINES:
            terminalreporter.write_line(line)
