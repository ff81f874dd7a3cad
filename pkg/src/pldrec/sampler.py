"""Candidate pools, temperature-scaled loss resampling, and uniform negative sampling.

The scalar functions mirror one step of the procedure; the ``*_batch``
variants do the same for a whole mini-batch and are what the trainer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import InteractionSet


@dataclass(frozen=True)
class CandidatePool:
    user: int
    items: np.ndarray

    @property
    def k(self) -> int:
        return int(self.items.size)


@dataclass(frozen=True)
class ResampleConfig:
    k: int = 5
    tau: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")


def build_candidate_pool(user: int, per_user_items, k: int, rng: np.random.Generator) -> CandidatePool:
    """k independent uniform draws (with replacement) from the user's items."""
    items = np.asarray(sorted(per_user_items) if isinstance(per_user_items, (set, frozenset))
                       else per_user_items, dtype=np.int64)
    if items.size == 0:
        raise ValueError(f"user {user} has no interacted items")
    return CandidatePool(user, items[rng.integers(0, items.size, size=k)])


def resample_probabilities(losses, tau: float) -> np.ndarray:
    """Softmax of ``-losses / tau`` along the last axis."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    z = -np.asarray(losses, dtype=float) / tau
    z -= z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def resample(pool: CandidatePool, losses, tau: float, rng: np.random.Generator) -> int:
    p = resample_probabilities(losses, tau)
    if p.shape != pool.items.shape:
        raise ValueError("losses must align with pool items")
    return int(pool.items[_categorical(p[None, :], rng)[0]])


def sample_negative(user: int, per_user_items, num_items: int, rng: np.random.Generator) -> int:
    """Uniform draw from the items the user has not interacted with."""
    positives = set(int(x) for x in per_user_items)
    if len(positives) >= num_items:
        raise ValueError(f"user {user} has interacted with every item")
    while True:
        j = int(rng.integers(num_items))
        if j not in positives:
            return j


# ---------------------------------------------------------------- batched

def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    r = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    idx = (cdf <= r).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def draw_pools_batch(users: np.ndarray, graph: InteractionSet, k: int,
                     rng: np.random.Generator) -> np.ndarray:
    """(B, k) matrix of pool items, each row drawn with replacement from V_u."""
    deg = graph.user_degree[users]
    if np.any(deg == 0):
        raise ValueError("cannot build a pool for a user with no items")
    offsets = (rng.random((users.size, k)) * deg[:, None]).astype(np.int64)
    return graph.indices[graph.indptr[users][:, None] + offsets]


def resample_batch(losses: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Column index chosen in each row of a (B, k) loss matrix."""
    return _categorical(resample_probabilities(losses, tau), rng)


def sample_negatives_batch(users: np.ndarray, graph: InteractionSet,
                           rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample one absent item per user."""
    if np.any(graph.user_degree[users] >= graph.num_items):
        raise ValueError("a user has interacted with every item")
    neg = rng.integers(0, graph.num_items, size=users.size)
    bad = graph.contains(users, neg)
    while bad.any():
        idx = np.flatnonzero(bad)
        neg[idx] = rng.integers(0, graph.num_items, size=idx.size)
        bad[idx] = graph.contains(users[idx], neg[idx])
    return neg
