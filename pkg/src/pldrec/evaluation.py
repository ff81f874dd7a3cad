"""Full-ranking Recall@K and NDCG@K with exclusion of already-observed items."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import InteractionSet
from .model import ModelState, score_matrix

logger = logging.getLogger(__name__)

DEFAULT_K = (20, 50)


@dataclass
class MetricReport:
    K_values: tuple
    recall: dict
    ndcg: dict
    num_evaluated_users: int

    def rows(self) -> list[dict]:
        return [{"K": k, "recall": self.recall[k], "ndcg": self.ndcg[k],
                 "users": self.num_evaluated_users} for k in self.K_values]


def topk(scores, excluded, K: int) -> list[int]:
    """Indices of the K best non-excluded scores, ties going to the lower index."""
    scores = np.asarray(scores, dtype=float).copy()
    excluded = np.asarray(sorted(excluded), dtype=np.int64)
    available = scores.size - excluded.size
    if K > available:
        logger.warning("K=%d exceeds %d rankable items; clamping", K, available)
        K = available
    scores[excluded] = -np.inf
    return np.argsort(-scores, kind="stable")[:K].tolist()


def _discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def evaluate(state: ModelState, train: InteractionSet, test: InteractionSet,
             K_values=DEFAULT_K, chunk: int = 2048) -> MetricReport:
    """Average Recall@K / NDCG@K over users that have test items.

    ``train`` holds every interaction that must not be recommended again.
    """
    K_values = tuple(int(k) for k in K_values)
    if any(k < 1 for k in K_values):
        raise ValueError("K must be >= 1")
    kmax = min(max(K_values), test.num_items)
    users = np.flatnonzero(test.user_degree > 0)
    disc = _discounts(kmax)
    cum_disc = np.concatenate([[0.0], np.cumsum(disc)])
    recall_sum = {k: 0.0 for k in K_values}
    ndcg_sum = {k: 0.0 for k in K_values}
    for start in range(0, users.size, chunk):
        batch = users[start:start + chunk]
        s = score_matrix(state, batch)
        rows = np.repeat(np.arange(batch.size), train.user_degree[batch])
        seen = train.indices[np.concatenate([np.arange(train.indptr[u], train.indptr[u + 1])
                                             for u in batch])] if batch.size else []
        s[rows, seen] = -np.inf
        ranked = np.argsort(-s, axis=1, kind="stable")[:, :kmax]
        hits = test.contains(np.repeat(batch, kmax), ranked.ravel()).reshape(batch.size, kmax)
        # an item ranked after all excluded ones may still be -inf; it cannot be a test hit
        n_test = test.user_degree[batch]
        for k in K_values:
            kk = min(k, kmax)
            h = hits[:, :kk]
            recall_sum[k] += float(np.sum(h.sum(axis=1) / n_test))
            dcg = h @ disc[:kk]
            idcg = cum_disc[np.minimum(kk, n_test)]
            ndcg_sum[k] += float(np.sum(dcg / idcg))
    n = int(users.size)
    denom = max(n, 1)
    return MetricReport(K_values, {k: recall_sum[k] / denom for k in K_values},
                        {k: ndcg_sum[k] / denom for k in K_values}, n)
