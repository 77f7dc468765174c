import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uplinkgame.model import NetworkInstance
from uplinkgame.scenario import ScenarioSpec, example1_equilibria, generate, make_example1

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ex1():
    return make_example1()


@pytest.fixture
def ex1_ne():
    return example1_equilibria()


def random_instance(rng, n=None, k=None, mask=False):
    """Small instance with gains spread over four decades."""
    n = n or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, 7))
    gain = 10 ** rng.uniform(-2, 2, size=(n, k))
    noise = 10 ** rng.uniform(-2, 0, size=k)
    budget = rng.uniform(0.5, 2.0, size=n)
    m = None
    if mask:
        m = rng.uniform(0.3, 1.5, size=(n, k)) * budget[:, None]
        m[rng.random((n, k)) < 0.3] = np.inf
        short = m.sum(axis=1) < budget
        m[short] = budget[short, None]  # every entry alone could absorb the budget
    return NetworkInstance(gain, noise, budget, m)


def random_profile(rng, inst, tight=True):
    """Feasible profile; budget-tight by default. Mass is biased toward a
    random subset of channels so that zeros appear."""
    p = rng.exponential(size=inst.gain.shape)
    p[rng.random(p.shape) < 0.3] = 0.0
    p[:, 0] += 1e-3  # never an all-zero row
    p = p / p.sum(axis=1, keepdims=True) * inst.budget[:, None]
    if not tight:
        p *= rng.uniform(0.2, 1.0, size=(inst.n_users, 1))
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


@pytest.fixture(scope="session")
def ap_instances():
    return [generate(ScenarioSpec(int(n), int(k), seed=s))
            for s, (n, k) in enumerate([(3, 4), (5, 8), (6, 16), (2, 3), (4, 12)])]
