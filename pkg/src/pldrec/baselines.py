"""Loss-based reweighting baselines: soft weighting (R-CE style) and truncation (T-CE style)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TruncateSchedule:
    max_drop_rate: float = 0.1
    ramp_epochs: int = 10

    def __post_init__(self):
        if not 0 <= self.max_drop_rate < 1:
            raise ValueError("max_drop_rate must be in [0, 1)")
        if self.ramp_epochs < 1:
            raise ValueError("ramp_epochs must be >= 1")

    def drop_rate(self, epoch: int) -> float:
        return self.max_drop_rate * min(1.0, epoch / self.ramp_epochs)


def rce_weight(loss, beta: float = 1.0):
    """exp(-beta * loss): 1 at zero loss, shrinking for high-loss interactions."""
    return np.exp(-beta * np.asarray(loss, dtype=float))[()]


def tce_mask(batch_losses, epoch: int, schedule: TruncateSchedule) -> np.ndarray:
    """Keep-mask that drops the ceil(r * B) largest losses of the batch.

    Among tied losses the lower index is kept first.
    """
    losses = np.asarray(batch_losses, dtype=float)
    if losses.size == 0:
        raise ValueError("empty batch")
    n_drop = math.ceil(schedule.drop_rate(epoch) * losses.size - 1e-9)
    keep = np.zeros(losses.size, dtype=bool)
    keep[np.argsort(losses, kind="stable")[:losses.size - n_drop]] = True
    return keep
