import os

import numpy as np
import pytest

from network import Activation, Layer, Network
from sat_core import phase_rng
from spec_io import load_network, load_problem

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")
TOL = 1e-9


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def find_seed(*phases, limit=10000):
    """Smallest seed whose first decision phases come out as given (True = active)."""
    for seed in range(limit):
        rng = phase_rng(seed, 0)
        if all((rng.random() < 0.5) is phase for phase in phases):
            return seed
    raise AssertionError(f"no seed below {limit} produces phases {phases}")


@pytest.fixture
def example_net():
    return Network(2, [
        Layer(np.array([[-0.5, 0.5], [1.0, 1.0]]), np.array([1.0, -1.0]), Activation.RELU),
        Layer(np.array([[-1.0, 1.0]]), np.array([-1.0]), Activation.IDENTITY),
    ])


@pytest.fixture
def example_net_file():
    return fixture_path("example_net.json")


@pytest.fixture
def valid_problem():
    """x5 >= 0 is the counterexample condition; it is unreachable."""
    return load_problem(fixture_path("example_net.json"), fixture_path("valid.vnnlib"))


@pytest.fixture
def invalid_problem():
    return load_problem(fixture_path("example_net.json"), fixture_path("invalid.vnnlib"))


@pytest.fixture
def disjunctive_problem():
    return load_problem(fixture_path("example_net.json"), fixture_path("disjunctive.vnnlib"))


@pytest.fixture
def loaded_example_net():
    return load_network(fixture_path("example_net.json"))
