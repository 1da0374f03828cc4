import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir)))

from resonantqoc import FIXTURES_DIR  # noqa: E402
from resonantqoc.dynamics import to_real_pair  # noqa: E402
from resonantqoc.resonance import counterexample_pair  # noqa: E402
from resonantqoc.system import LevelSystem  # noqa: E402


@pytest.fixture
def fixture_path():
    def path(name: str) -> str:
        return os.path.join(FIXTURES_DIR, name)

    return path


@pytest.fixture(scope="session")
def ladder_pairs():
    return counterexample_pair()


@pytest.fixture
def unbounded_ladder():
    return LevelSystem.build([0.0, 1.0, 2.0, 3.0], [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def real_pair_a(ladder_pairs, unbounded_ladder):
    """Pair A of the ladder viewed in the reduced real problem, on a system without bounds."""
    pair = to_real_pair(ladder_pairs[0])
    return type(pair)(pair.trajectory, pair.control, unbounded_ladder)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
