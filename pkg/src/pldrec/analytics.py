"""Loss-distribution diagnostics for normal vs noisy interactions.

Two views are compared: the overall distribution pooled across users and
each user's personal distribution. The overlap region between the two
label groups is bounded by quartiles, ``[q1(noisy), q3(normal)]``, and is
empty when the noisy lower quartile already sits above the normal upper
quartile. Membership is inclusive at both ends.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import NoisyTrainSet
from .loss import LossKind, positive_loss
from .model import ModelState
from .sampler import sample_negatives_batch

logger = logging.getLogger(__name__)


@dataclass
class LossRecord:
    users: np.ndarray
    items: np.ndarray
    losses: np.ndarray
    is_noisy: np.ndarray

    def __len__(self):
        return int(self.losses.size)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "item", "loss", "label"])
            for u, i, l, f in zip(self.users.tolist(), self.items.tolist(),
                                  self.losses.tolist(), self.is_noisy.tolist()):
                w.writerow([u, i, repr(l), "noisy" if f else "normal"])


@dataclass(frozen=True)
class OverlapRegion:
    low: float = np.nan
    high: float = np.nan
    empty: bool = True
    # set when one of the label groups had no entries
    missing_label: bool = False

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.empty:
            return np.zeros(values.shape, dtype=bool)
        return (values >= self.low) & (values <= self.high)


@dataclass(frozen=True)
class OverlapStats:
    scope: str
    normal_in: int
    noise_in: int
    normal_total: int
    noise_total: int

    @property
    def normal_ratio(self) -> float:
        return self.normal_in / self.normal_total if self.normal_total else float("nan")

    @property
    def noise_ratio(self) -> float:
        return self.noise_in / self.noise_total if self.noise_total else float("nan")


def quartiles(values) -> tuple[float, float, float]:
    """Linear-interpolation quartiles (position (n-1)p in the sorted sample)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("quartiles of an empty sample")
    q1, q2, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return float(q1), float(q2), float(q3)


def overlap_region(normal_losses, noisy_losses) -> OverlapRegion:
    normal_losses = np.asarray(normal_losses, dtype=float)
    noisy_losses = np.asarray(noisy_losses, dtype=float)
    if normal_losses.size == 0 or noisy_losses.size == 0:
        return OverlapRegion(missing_label=True)
    low = quartiles(noisy_losses)[0]
    high = quartiles(normal_losses)[2]
    if low > high:
        return OverlapRegion(low, high, empty=True)
    return OverlapRegion(low, high, empty=False)


def _user_groups(record: LossRecord):
    order = np.argsort(record.users, kind="stable")
    users = record.users[order]
    bounds = np.flatnonzero(np.diff(users)) + 1
    for idx in np.split(order, bounds):
        if idx.size:
            yield int(record.users[idx[0]]), idx


def overlap_stats(record: LossRecord, scope: str = "global") -> OverlapStats:
    """Count normal / noisy entries inside the global or per-user overlap region."""
    noisy = record.is_noisy.astype(bool)
    if scope == "global":
        region = overlap_region(record.losses[~noisy], record.losses[noisy])
        inside = region.contains(record.losses)
    elif scope == "personal":
        inside = np.zeros(len(record), dtype=bool)
        for _, idx in _user_groups(record):
            l, f = record.losses[idx], noisy[idx]
            region = overlap_region(l[~f], l[f])
            inside[idx] = region.contains(l)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    return OverlapStats(scope, int(np.sum(inside & ~noisy)), int(np.sum(inside & noisy)),
                        int(np.sum(~noisy)), int(np.sum(noisy)))


def quartile_gap_per_user(record: LossRecord) -> tuple[dict[int, float], list[int]]:
    """q1(normal losses) - q3(noisy losses) for each user holding both labels.

    Returns the gaps and the list of users skipped for lacking a label.
    """
    gaps, skipped = {}, []
    noisy = record.is_noisy.astype(bool)
    for u, idx in _user_groups(record):
        l, f = record.losses[idx], noisy[idx]
        if f.all() or not f.any():
            skipped.append(u)
            continue
        gaps[u] = quartiles(l[~f])[0] - quartiles(l[f])[2]
    return gaps, skipped


def collect_losses(state: ModelState, data: NoisyTrainSet, kind: LossKind,
                   rng: np.random.Generator) -> LossRecord:
    """Per-interaction loss for every labelled training pair.

    BPR draws one fresh uniform negative per interaction.
    """
    obs = data.observed
    U, V = state.embeddings()
    eu = U[obs.users]
    s_pos = np.einsum("bd,bd->b", eu, V[obs.items])
    if LossKind(kind) is LossKind.BPR:
        neg = sample_negatives_batch(obs.users, obs, rng)
        s_neg = np.einsum("bd,bd->b", eu, V[neg])
    else:
        s_neg = np.zeros_like(s_pos)
    losses = positive_loss(s_pos, s_neg, kind)
    return LossRecord(obs.users.copy(), obs.items.copy(), np.asarray(losses, dtype=float),
                      data.is_noisy.copy())
