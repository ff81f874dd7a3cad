"""Per-interaction losses (BPR, BCE) and their analytic gradients."""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .model import ModelState


class LossKind(str, enum.Enum):
    BPR = "bpr"
    BCE = "bce"


class TrainingTriple(NamedTuple):
    u: int
    i: int
    j: int


def softplus(x):
    return np.logaddexp(0.0, x)


def bpr_loss(s_pos, s_neg):
    """-ln sigmoid(s_pos - s_neg)."""
    return softplus(-(np.asarray(s_pos, dtype=float) - s_neg))


def bce_loss(s, label):
    s = np.asarray(s, dtype=float)
    return np.where(np.asarray(label) == 1, softplus(-s), softplus(s))[()]


def positive_loss(s_pos, s_neg, kind: LossKind):
    """The per-interaction loss l_{u,v} that drives resampling and analytics.

    Under BCE only the positive term enters; ``s_neg`` is ignored.
    """
    if LossKind(kind) is LossKind.BPR:
        return bpr_loss(s_pos, s_neg)
    return softplus(-np.asarray(s_pos, dtype=float))


def training_loss(s_pos, s_neg, kind: LossKind):
    """Loss optimised for one triple: BPR, or BCE on the positive plus one label-0 negative."""
    if LossKind(kind) is LossKind.BPR:
        return bpr_loss(s_pos, s_neg)
    return softplus(-np.asarray(s_pos, dtype=float)) + softplus(s_neg)


def interaction_loss(state: ModelState, triple: TrainingTriple, kind: LossKind) -> float:
    U, V = state.embeddings()
    u, i, j = triple
    return float(positive_loss(U[u] @ V[i], U[u] @ V[j], kind))


def triple_gradients(eu, ei, ej, kind: LossKind, weight=1.0):
    """Gradients of ``weight * training_loss`` w.r.t. the three embedding rows.

    Works row-wise on (B, d) arrays; ``weight`` broadcasts over B.
    """
    eu, ei, ej = (np.asarray(a, dtype=float) for a in (eu, ei, ej))
    w = np.asarray(weight, dtype=float)
    s_i = np.sum(eu * ei, axis=-1)
    s_j = np.sum(eu * ej, axis=-1)
    if LossKind(kind) is LossKind.BPR:
        # d/dx softplus(-x) = -sigmoid(-x)
        c = (-w * expit(-(s_i - s_j)))[..., None]
        return c * (ei - ej), c * eu, -c * eu
    ci = (-w * expit(-s_i))[..., None]
    cj = (w * expit(s_j))[..., None]
    return ci * ei + cj * ej, ci * eu, cj * eu


def gradients(state: ModelState, triple: TrainingTriple, kind: LossKind, weight: float = 1.0,
              reg: float = 0.0) -> dict[str, np.ndarray]:
    """Gradient of ``weight * loss + reg/2 * (|e_u|^2 + |e_i|^2 + |e_j|^2)``.

    Returns the three touched rows keyed ``"u"``, ``"i"``, ``"j"``. With
    propagation enabled the rows are those of the propagated embeddings.
    """
    if weight < 0:
        raise ValueError("weight must be >= 0")
    U, V = state.embeddings()
    u, i, j = triple
    gu, gi, gj = triple_gradients(U[u], V[i], V[j], kind, weight)
    return {"u": gu + reg * U[u], "i": gi + reg * V[i], "j": gj + reg * V[j]}
