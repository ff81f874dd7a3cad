"""Interaction data: loading, filtering, splitting, noise injection, synthesis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

LABEL_NORMAL = "normal"
LABEL_NOISY = "noisy"


class DataError(ValueError):
    """Raised for malformed input files or impossible data requests."""


def round_half_up(x: float) -> int:
    # the epsilon absorbs float products such as 0.1 * 1000 = 100.00000000000001
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True, eq=False)
class InteractionSet:
    """A set of distinct (user, item) pairs over a dense index space.

    ``users[t], items[t]`` is the t-th interaction. Pair order is preserved
    (labels elsewhere are aligned to it); the per-user grouping is derived
    lazily as a CSR structure.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    user_ids: tuple | None = None
    item_ids: tuple | None = None

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64).ravel()
        items = np.asarray(self.items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise DataError("users and items must have equal length")
        if users.size:
            if users.min() < 0 or users.max() >= self.num_users:
                raise DataError("user index out of range")
            if items.min() < 0 or items.max() >= self.num_items:
                raise DataError("item index out of range")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        if np.unique(self.codes).size != users.size:
            raise DataError("duplicate (user, item) pairs")

    @classmethod
    def from_pairs(cls, num_users: int, num_items: int, pairs: Sequence[tuple[int, int]], **kw):
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(num_users, num_items, arr[:, 0], arr[:, 1], **kw)

    def __len__(self) -> int:
        return int(self.users.size)

    @cached_property
    def codes(self) -> np.ndarray:
        """Flat pair codes ``user * num_items + item``."""
        return self.users * self.num_items + self.items

    @cached_property
    def _sorted_codes(self) -> np.ndarray:
        return np.sort(self.codes)

    @cached_property
    def _csr(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.lexsort((self.items, self.users))
        counts = np.bincount(self.users, minlength=self.num_users)
        indptr = np.zeros(self.num_users + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, self.items[order]

    @property
    def indptr(self) -> np.ndarray:
        return self._csr[0]

    @property
    def indices(self) -> np.ndarray:
        """Items grouped by user (sorted within each user)."""
        return self._csr[1]

    @property
    def user_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def item_degree(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.num_items)

    def items_of(self, user: int) -> np.ndarray:
        return self.indices[self.indptr[user]:self.indptr[user + 1]]

    @property
    def per_user_items(self) -> list[set[int]]:
        return [set(self.items_of(u).tolist()) for u in range(self.num_users)]

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.users.tolist(), self.items.tolist()))

    def contains(self, users, items) -> np.ndarray:
        """Vectorised membership test for (users[t], items[t])."""
        q = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        sc = self._sorted_codes
        if sc.size == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(sc, q), sc.size - 1)
        return sc[pos] == q

    def lookup(self, users, items) -> np.ndarray:
        """Position of each query pair in this set's pair order (-1 if absent)."""
        q = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        order = self._code_order
        sc = self.codes[order]
        if sc.size == 0:
            return np.full(q.shape, -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(sc, q), sc.size - 1)
        return np.where(sc[pos] == q, order[pos], -1)

    @cached_property
    def _code_order(self) -> np.ndarray:
        return np.argsort(self.codes, kind="stable")

    def subset(self, mask_or_index) -> "InteractionSet":
        return InteractionSet(self.num_users, self.num_items, self.users[mask_or_index],
                              self.items[mask_or_index], self.user_ids, self.item_ids)

    def union(self, other: "InteractionSet") -> "InteractionSet":
        """Pairs of ``self`` followed by pairs of ``other`` not already present."""
        self._check_space(other)
        keep = ~self.contains(other.users, other.items)
        return InteractionSet(self.num_users, self.num_items,
                              np.concatenate([self.users, other.users[keep]]),
                              np.concatenate([self.items, other.items[keep]]),
                              self.user_ids, self.item_ids)

    def _check_space(self, other: "InteractionSet"):
        if (self.num_users, self.num_items) != (other.num_users, other.num_items):
            raise DataError("interaction sets live in different index spaces")

    def same_pairs(self, other: "InteractionSet") -> bool:
        return (self.num_users, self.num_items) == (other.num_users, other.num_items) and \
            np.array_equal(self._sorted_codes, other._sorted_codes)

    @staticmethod
    def empty(num_users: int, num_items: int, **kw) -> "InteractionSet":
        z = np.zeros(0, dtype=np.int64)
        return InteractionSet(num_users, num_items, z, z, **kw)


@dataclass(frozen=True)
class SplitDataset:
    train: InteractionSet
    validation: InteractionSet
    test: InteractionSet
    seed: int
    # users whose train share is empty; they are skipped at evaluation
    excluded_users: tuple = ()


@dataclass(frozen=True, eq=False)
class NoisyTrainSet:
    """Observed training interactions with ground-truth noise labels.

    ``observed`` lists the normal interactions first and the injected ones
    after; ``is_noisy`` is aligned to that order. Labels exist for telemetry
    and analysis only.
    """

    observed: InteractionSet
    is_noisy: np.ndarray
    num_injected: int
    shortfall: dict = field(default_factory=dict)

    @property
    def base(self) -> InteractionSet:
        return self.observed.subset(slice(0, len(self.observed) - self.num_injected))

    @property
    def injected(self) -> list[tuple[int, int]]:
        n0 = len(self.observed) - self.num_injected
        return list(zip(self.observed.users[n0:].tolist(), self.observed.items[n0:].tolist()))

    @property
    def labels(self) -> list[str]:
        return [LABEL_NOISY if f else LABEL_NORMAL for f in self.is_noisy]

    @classmethod
    def clean(cls, train: InteractionSet) -> "NoisyTrainSet":
        return cls(train, np.zeros(len(train), dtype=bool), 0)

    def erase_labels(self) -> "NoisyTrainSet":
        """Same interactions with every label reset to normal."""
        return NoisyTrainSet(self.observed, np.zeros(len(self.observed), dtype=bool),
                             self.num_injected, dict(self.shortfall))


@dataclass(frozen=True)
class SyntheticData:
    interactions: InteractionSet
    user_latent: np.ndarray
    item_latent: np.ndarray


# ---------------------------------------------------------------- loading

def load_interactions(path) -> InteractionSet:
    """Read whitespace-separated ``user item`` lines.

    Raw ids are re-indexed densely in first-appearance order and duplicate
    pairs are collapsed. The raw ids are kept on the returned set
    (``user_ids`` / ``item_ids``) and can be written with
    :func:`write_id_mapping`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"interaction file not found: {path}")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items = [], []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(tokens)}")
            u = user_index.setdefault(tokens[0], len(user_index))
            i = item_index.setdefault(tokens[1], len(item_index))
            if (u, i) in seen:
                continue
            seen.add((u, i))
            users.append(u)
            items.append(i)
    if not users:
        raise DataError(f"{path}: no interactions")
    return InteractionSet(len(user_index), len(item_index), np.array(users), np.array(items),
                          user_ids=tuple(user_index), item_ids=tuple(item_index))


def filter_min_degree(data: InteractionSet, min_count: int) -> InteractionSet:
    """Iteratively drop users and items with fewer than ``min_count`` interactions."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    users, items = data.users, data.items
    while True:
        udeg = np.bincount(users, minlength=data.num_users)
        ideg = np.bincount(items, minlength=data.num_items)
        keep = (udeg[users] >= min_count) & (ideg[items] >= min_count)
        if keep.all():
            break
        users, items = users[keep], items[keep]
        if users.size == 0:
            break
    if users.size == 0:
        raise DataError("filter eliminated all data")
    # dense re-index preserving the original relative order of indices
    kept_u = np.unique(users)
    kept_i = np.unique(items)
    new_users = np.searchsorted(kept_u, users)
    new_items = np.searchsorted(kept_i, items)
    uids = tuple(data.user_ids[k] for k in kept_u) if data.user_ids is not None else None
    iids = tuple(data.item_ids[k] for k in kept_i) if data.item_ids is not None else None
    return InteractionSet(kept_u.size, kept_i.size, new_users, new_items, uids, iids)


def split(data: InteractionSet, train_frac: float = 0.8, val_frac_of_train: float = 0.1,
          seed: int = 0) -> SplitDataset:
    """Per-user train/test split followed by a global validation draw from train."""
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    if not 0 <= val_frac_of_train < 1:
        raise ValueError("val_frac_of_train must be in [0, 1)")
    rng = np.random.default_rng(seed)
    indptr = data.indptr
    order = np.lexsort((data.items, data.users))  # positions grouped by user
    is_train = np.zeros(len(data), dtype=bool)
    excluded = []
    for u in range(data.num_users):
        rows = order[indptr[u]:indptr[u + 1]]
        if rows.size == 0:
            continue
        n_train = round_half_up(train_frac * rows.size)
        if n_train == 0:
            excluded.append(u)
        is_train[rng.permutation(rows)[:n_train]] = True
    if excluded:
        logger.warning("%d users have no training interactions and are excluded from evaluation",
                       len(excluded))
    train_pos = np.flatnonzero(is_train)
    n_val = round_half_up(val_frac_of_train * train_pos.size)
    val_pos = np.sort(rng.choice(train_pos, size=n_val, replace=False)) if n_val else train_pos[:0]
    is_val = np.zeros(len(data), dtype=bool)
    is_val[val_pos] = True
    return SplitDataset(
        train=data.subset(is_train & ~is_val),
        validation=data.subset(is_val),
        test=data.subset(~is_train),
        seed=seed,
        excluded_users=tuple(excluded),
    )


# ---------------------------------------------------------------- noise

def _occupied_codes(train: InteractionSet, forbidden) -> np.ndarray:
    codes = [train.codes]
    for f in _as_list(forbidden):
        train._check_space(f)
        codes.append(f.codes)
    return np.unique(np.concatenate(codes))


def _as_list(forbidden):
    if forbidden is None:
        return []
    if isinstance(forbidden, InteractionSet):
        return [forbidden]
    return list(forbidden)


def _with_injected(train: InteractionSet, users: np.ndarray, items: np.ndarray,
                   shortfall=None) -> NoisyTrainSet:
    observed = InteractionSet(train.num_users, train.num_items,
                              np.concatenate([train.users, users]),
                              np.concatenate([train.items, items]),
                              train.user_ids, train.item_ids)
    is_noisy = np.zeros(len(observed), dtype=bool)
    is_noisy[len(train):] = True
    return NoisyTrainSet(observed, is_noisy, int(users.size), shortfall or {})


def inject_noise_ratio(train: InteractionSet, rho: float, seed: int = 0,
                       forbidden=None) -> NoisyTrainSet:
    """Add ``round(rho * |train|)`` uniformly random absent pairs, labelled noisy.

    Pairs present in ``train`` or in any ``forbidden`` set (held-out data)
    are never drawn.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    count = round_half_up(rho * len(train))
    occupied = _occupied_codes(train, forbidden)
    total = train.num_users * train.num_items
    available = total - occupied.size
    if count > available:
        raise DataError(f"cannot inject {count} noisy pairs: only {available} absent pairs")
    rng = np.random.default_rng(seed)
    if count == 0:
        chosen = np.zeros(0, dtype=np.int64)
    elif available < 4 * count:
        free = np.setdiff1d(np.arange(total, dtype=np.int64), occupied, assume_unique=True)
        chosen = rng.choice(free, size=count, replace=False)
    else:
        chosen = np.zeros(0, dtype=np.int64)
        while chosen.size < count:
            draw = rng.integers(0, total, size=2 * (count - chosen.size) + 16)
            draw = draw[~np.isin(draw, occupied)]
            # keep first occurrences, in draw order
            merged = np.concatenate([chosen, draw])
            _, first = np.unique(merged, return_index=True)
            chosen = merged[np.sort(first)][:count]
    return _with_injected(train, chosen // train.num_items, chosen % train.num_items)


def inject_noise_per_user(train: InteractionSet, count: int, seed: int = 0,
                          forbidden=None) -> NoisyTrainSet:
    """Add ``count`` uniformly drawn absent items to every user.

    Users whose absent-item pool is smaller than ``count`` get the whole
    pool; the missing amount is recorded in ``shortfall``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    occupied = _occupied_codes(train, forbidden)
    rng = np.random.default_rng(seed)
    users, items, shortfall = [], [], {}
    all_items = np.arange(train.num_items, dtype=np.int64)
    if count:
        for u in range(train.num_users):
            lo, hi = np.searchsorted(occupied, [u * train.num_items, (u + 1) * train.num_items])
            free = np.setdiff1d(all_items, occupied[lo:hi] - u * train.num_items, assume_unique=True)
            take = min(count, free.size)
            if take < count:
                shortfall[u] = count - take
            picked = rng.choice(free, size=take, replace=False)
            users.append(np.full(take, u, dtype=np.int64))
            items.append(picked)
    if shortfall:
        logger.warning("noise shortfall for %d users", len(shortfall))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
    return _with_injected(train, cat(users), cat(items), shortfall)


# ---------------------------------------------------------------- synthetic

def generate_synthetic(num_users: int, num_items: int, latent_dim: int, per_user: int,
                       seed: int = 0) -> SyntheticData:
    """Each user interacts with their ``per_user`` best items under hidden Gaussian latents."""
    if per_user > num_items:
        raise ValueError("per_user cannot exceed num_items")
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((num_users, latent_dim))
    Q = rng.standard_normal((num_items, latent_dim))
    scores = P @ Q.T
    top = np.argsort(-scores, axis=1, kind="stable")[:, :per_user]
    users = np.repeat(np.arange(num_users), per_user)
    data = InteractionSet(num_users, num_items, users, top.ravel())
    return SyntheticData(data, P, Q)


# ---------------------------------------------------------------- files

def write_labeled(path, data: InteractionSet, is_noisy=None):
    """Write ``user<TAB>item<TAB>label`` rows using dense indices."""
    flags = np.zeros(len(data), dtype=bool) if is_noisy is None else np.asarray(is_noisy)
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, f in zip(data.users.tolist(), data.items.tolist(), flags.tolist()):
            fh.write(f"{u}\t{i}\t{LABEL_NOISY if f else LABEL_NORMAL}\n")


def read_labeled(path, num_users: int, num_items: int) -> NoisyTrainSet:
    """Inverse of :func:`write_labeled`; normal rows are placed before noisy rows."""
    users, items, flags = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 3 or tokens[2] not in (LABEL_NORMAL, LABEL_NOISY):
                raise DataError(f"{path}:{lineno}: expected 'user item normal|noisy'")
            users.append(int(tokens[0]))
            items.append(int(tokens[1]))
            flags.append(tokens[2] == LABEL_NOISY)
    flags = np.array(flags, dtype=bool)
    order = np.argsort(flags, kind="stable")
    data = InteractionSet(num_users, num_items, np.array(users, dtype=np.int64)[order],
                          np.array(items, dtype=np.int64)[order])
    return NoisyTrainSet(data, flags[order], int(flags.sum()))


def write_id_mapping(path, raw_ids: Sequence[str] | None, n: int):
    """Write ``raw_id<TAB>dense_index``; synthetic data maps each index to itself."""
    ids = raw_ids if raw_ids is not None else [str(k) for k in range(n)]
    with open(path, "w", encoding="utf-8") as fh:
        for k, raw in enumerate(ids):
            fh.write(f"{raw}\t{k}\n")
