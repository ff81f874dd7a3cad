import numpy as np
import pytest

from pldrec.dataset import InteractionSet, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_set():
    # 3 users, 5 items
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 3), (2, 0), (2, 4), (2, 2), (2, 3)]
    return InteractionSet.from_pairs(3, 5, pairs)


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic(60, 80, 4, 12, seed=7)


def random_interactions(rng, num_users, num_items, density):
    mask = rng.random((num_users, num_items)) < density
    u, i = np.nonzero(mask)
    return InteractionSet(num_users, num_items, u, i)
