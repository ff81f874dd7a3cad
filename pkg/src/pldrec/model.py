"""Embedding scorers: matrix factorisation with optional LightGCN-style propagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataset import InteractionSet

INIT_STD = 0.1


class StaleCacheError(RuntimeError):
    """Propagated embeddings were requested after a parameter update."""


class Propagator:
    """Layer-mean of symmetric-normalised neighbour averaging on the bipartite graph.

    Nodes are stacked users-then-items. The operator is linear and symmetric,
    so the same ``apply`` maps gradients back to the base embeddings.
    """

    def __init__(self, graph: InteractionSet, layers: int):
        if layers < 1:
            raise ValueError("propagation needs layers >= 1")
        nu, ni = graph.num_users, graph.num_items
        n = nu + ni
        rows = np.concatenate([graph.users, graph.items + nu])
        cols = np.concatenate([graph.items + nu, graph.users])
        deg = np.bincount(rows, minlength=n).astype(float)
        inv_sqrt = np.zeros(n)
        np.divide(1.0, np.sqrt(deg), out=inv_sqrt, where=deg > 0)
        vals = inv_sqrt[rows] * inv_sqrt[cols]
        self.adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.isolated = deg == 0
        self.layers = layers
        self.num_users = nu
        self.graph = graph

    def apply(self, stacked: np.ndarray) -> np.ndarray:
        out = stacked.copy()
        cur = stacked
        for _ in range(self.layers):
            cur = self.adj @ cur
            out += cur
        out /= self.layers + 1
        out[self.isolated] = stacked[self.isolated]
        return out


@dataclass(eq=False)
class ModelState:
    user_embeddings: np.ndarray
    item_embeddings: np.ndarray
    layers: int = 0
    seed: int = 0
    _version: int = field(default=0, repr=False)
    _cache: tuple | None = field(default=None, repr=False)
    _propagator: Propagator | None = field(default=None, repr=False)

    @property
    def num_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.user_embeddings.shape[1]

    def invalidate(self):
        """Mark propagated embeddings stale; call after every parameter update."""
        self._version += 1

    @property
    def cache_valid(self) -> bool:
        return self._cache is not None and self._cache[0] == self._version

    def embeddings(self) -> tuple[np.ndarray, np.ndarray]:
        """The (user, item) matrices that scores are computed from."""
        if self.layers == 0:
            return self.user_embeddings, self.item_embeddings
        if not self.cache_valid:
            raise StaleCacheError("propagated embeddings are stale; call propagate() first")
        return self._cache[1], self._cache[2]

    def copy(self) -> "ModelState":
        new = ModelState(self.user_embeddings.copy(), self.item_embeddings.copy(),
                         self.layers, self.seed)
        new._propagator = self._propagator
        return new


def init_model(num_users: int, num_items: int, dim: int = 64, layers: int = 0,
               seed: int = 0) -> ModelState:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    return ModelState(rng.normal(0.0, INIT_STD, (num_users, dim)),
                      rng.normal(0.0, INIT_STD, (num_items, dim)), layers, seed)


def propagator_for(state: ModelState, train: InteractionSet) -> Propagator:
    p = state._propagator
    if p is None or p.graph is not train or p.layers != state.layers:
        if (train.num_users, train.num_items) != (state.num_users, state.num_items):
            raise ValueError("graph and model dimensions differ")
        p = Propagator(train, state.layers)
        state._propagator = p
    return p


def propagate(state: ModelState, train: InteractionSet) -> tuple[np.ndarray, np.ndarray]:
    """Compute and cache the propagated (user, item) embeddings."""
    p = propagator_for(state, train)
    out = p.apply(np.vstack([state.user_embeddings, state.item_embeddings]))
    users, items = out[:state.num_users], out[state.num_users:]
    state._cache = (state._version, users, items)
    return users, items


def score(state: ModelState, u: int, v: int) -> float:
    U, V = state.embeddings()
    return float(U[u] @ V[v])


def score_all(state: ModelState, u: int) -> np.ndarray:
    U, V = state.embeddings()
    return V @ U[u]


def score_matrix(state: ModelState, users=None) -> np.ndarray:
    U, V = state.embeddings()
    if users is not None:
        U = U[users]
    return U @ V.T


def save_checkpoint(path, state: ModelState):
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh,
                 header=np.array([state.num_users, state.num_items, state.dim,
                                  state.layers, state.seed], dtype=np.int64),
                 user_embeddings=state.user_embeddings,
                 item_embeddings=state.item_embeddings)


def load_checkpoint(path) -> ModelState:
    with np.load(path) as z:
        nu, ni, dim, layers, seed = (int(x) for x in z["header"])
        U, V = z["user_embeddings"], z["item_embeddings"]
    if U.shape != (nu, dim) or V.shape != (ni, dim):
        raise ValueError(f"{path}: header does not match stored matrices")
    return ModelState(U, V, layers, seed)
