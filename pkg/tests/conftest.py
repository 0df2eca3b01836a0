import hypothesis
import numpy as np
import pytest

from mfv3d.gmm import GMM

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_gmm(rng: np.random.Generator, K: int, spread: float = 1.0) -> GMM:
    w = rng.dirichlet(np.ones(K))
    mu = rng.uniform(-spread, spread, size=(K, 3))
    sig = rng.uniform(0.2, 0.8, size=K)
    return GMM(w, mu, sig)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
