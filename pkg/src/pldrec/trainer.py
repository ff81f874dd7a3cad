"""Mini-batch SGD training with optional PLD resampling or loss-based reweighting.

One epoch enumerates every observed training interaction once, in a seeded
shuffle. For each enumerated ``(u, v)`` a negative ``j`` is drawn, then the
positive that actually gets optimised is chosen by the denoiser:

* ``none``: ``v`` itself.
* ``pld``: a pool of ``k`` items drawn with replacement from the user's
  items is scored against ``j``, and one member is resampled with
  probability proportional to ``exp(-loss / tau)``.
* ``rce`` / ``tce``: ``v``, with its update weighted by ``exp(-beta*loss)``
  or masked out when it is among the batch's largest losses.

Losses for a batch are computed on the parameters as they stand before that
batch's update. Noise labels are only read to count how many noisy
positives were optimised.
"""

from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import TruncateSchedule, rce_weight, tce_mask
from .dataset import InteractionSet, NoisyTrainSet
from .evaluation import evaluate
from .loss import LossKind, positive_loss, training_loss, triple_gradients
from .model import ModelState, init_model, propagate, propagator_for
from .sampler import ResampleConfig, draw_pools_batch, resample_batch, sample_negatives_batch

logger = logging.getLogger(__name__)


class Denoiser(str, enum.Enum):
    NONE = "none"
    PLD = "pld"
    RCE = "rce"
    TCE = "tce"


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss_kind: LossKind = LossKind.BPR
    denoiser: Denoiser = Denoiser.NONE
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    learning_rate: float = 0.05
    weight_decay: float = 1e-4
    batch_size: int = 1024
    max_epochs: int = 100
    # None disables early stopping
    patience: int | None = 10
    seed: int = 0
    rce_beta: float = 1.0
    truncate: TruncateSchedule = field(default_factory=TruncateSchedule)
    val_k: int = 20

    def __post_init__(self):
        self.loss_kind = LossKind(self.loss_kind)
        self.denoiser = Denoiser(self.denoiser)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    mean_train_loss: float
    sampled_normal: int
    sampled_noisy: int
    val_metric: float = float("nan")
    wall_clock_s: float = 0.0


EPOCH_COLUMNS = ["epoch", "mean_train_loss", "sampled_normal", "sampled_noisy", "val_metric",
                 "wall_clock_s"]


def write_history(path, history: list[EpochStats]):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EPOCH_COLUMNS)
        w.writeheader()
        for s in history:
            w.writerow(asdict(s))


def _select_positives(cfg: TrainConfig, users, items, neg, U, V, graph, rng, epoch):
    """Return (positives, per-triple weights) for one batch."""
    if cfg.denoiser is Denoiser.PLD:
        pools = draw_pools_batch(users, graph, cfg.resample.k, rng)
        eu = U[users]
        s_pool = np.einsum("bd,bkd->bk", eu, V[pools])
        s_neg = np.einsum("bd,bd->b", eu, V[neg])
        losses = positive_loss(s_pool, s_neg[:, None], cfg.loss_kind)
        pick = resample_batch(losses, cfg.resample.tau, rng)
        return pools[np.arange(users.size), pick], np.ones(users.size)
    if cfg.denoiser is Denoiser.NONE:
        return items, np.ones(users.size)
    eu = U[users]
    losses = positive_loss(np.einsum("bd,bd->b", eu, V[items]),
                           np.einsum("bd,bd->b", eu, V[neg]), cfg.loss_kind)
    if cfg.denoiser is Denoiser.RCE:
        return items, rce_weight(losses, cfg.rce_beta)
    return items, tce_mask(losses, epoch, cfg.truncate).astype(float)


def train_epoch(state: ModelState, data: NoisyTrainSet, cfg: TrainConfig,
                rng: np.random.Generator, epoch: int = 0) -> EpochStats:
    """One pass over the observed training interactions; updates ``state`` in place."""
    graph = data.observed
    if (graph.num_users, graph.num_items) != (state.num_users, state.num_items):
        raise ValueError("model dimensions do not match the data")
    t0 = time.perf_counter()
    nu = state.num_users
    lr, reg = cfg.learning_rate, cfg.weight_decay
    if state.layers:
        prop = propagator_for(state, graph)
        U, V = propagate(state, graph)  # refreshed once per epoch
    else:
        prop = None
    perm = rng.permutation(len(graph))
    loss_sum = 0.0
    n_noisy = 0
    for start in range(0, perm.size, cfg.batch_size):
        idx = perm[start:start + cfg.batch_size]
        users, items = graph.users[idx], graph.items[idx]
        if prop is None:
            U, V = state.user_embeddings, state.item_embeddings
        neg = sample_negatives_batch(users, graph, rng)
        pos, weight = _select_positives(cfg, users, items, neg, U, V, graph, rng, epoch)

        eu, ei, ej = U[users], V[pos], V[neg]
        batch_loss = training_loss(np.einsum("bd,bd->b", eu, ei),
                                   np.einsum("bd,bd->b", eu, ej), cfg.loss_kind)
        if not np.all(np.isfinite(batch_loss)):
            raise TrainingError(f"non-finite loss in epoch {epoch}, batch starting at {start}")
        loss_sum += float(batch_loss.sum())
        # telemetry only
        n_noisy += int(data.is_noisy[graph.lookup(users, pos)].sum())

        gu, gi, gj = triple_gradients(eu, ei, ej, cfg.loss_kind, weight)
        if prop is not None:
            # map gradients on propagated rows back to the base embeddings
            g = np.zeros((nu + state.num_items, state.dim))
            np.add.at(g, users, gu)
            np.add.at(g, nu + pos, gi)
            np.add.at(g, nu + neg, gj)
            g = prop.apply(g)
        if reg:
            # per-row L2 on the base rows, taken before this batch's update
            ru = reg * state.user_embeddings[users]
            ri = reg * state.item_embeddings[pos]
            rj = reg * state.item_embeddings[neg]
        if prop is None:
            if reg:
                gu, gi, gj = gu + ru, gi + ri, gj + rj
            np.add.at(state.user_embeddings, users, -lr * gu)
            np.add.at(state.item_embeddings, pos, -lr * gi)
            np.add.at(state.item_embeddings, neg, -lr * gj)
        else:
            state.user_embeddings -= lr * g[:nu]
            state.item_embeddings -= lr * g[nu:]
            if reg:
                np.add.at(state.user_embeddings, users, -lr * ru)
                np.add.at(state.item_embeddings, pos, -lr * ri)
                np.add.at(state.item_embeddings, neg, -lr * rj)
        state.invalidate()
    n = int(perm.size)
    return EpochStats(epoch, loss_sum / max(n, 1), n - n_noisy, n_noisy,
                      wall_clock_s=time.perf_counter() - t0)


def validation_recall(state: ModelState, train: InteractionSet, validation: InteractionSet,
                      k: int = 20) -> float:
    if len(validation) == 0:
        return float("nan")
    if state.layers and not state.cache_valid:
        propagate(state, train)
    return evaluate(state, train, validation, (k,)).recall[k]


def run_training(data: NoisyTrainSet, validation: InteractionSet | None, cfg: TrainConfig,
                 dim: int = 64, layers: int = 0,
                 state: ModelState | None = None) -> tuple[ModelState, list[EpochStats]]:
    """Train until ``max_epochs`` or ``patience`` epochs without a better validation Recall@K.

    Returns the best-validation model (the last one when there is no
    validation data) and the per-epoch history.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    graph = data.observed
    if state is None:
        state = init_model(graph.num_users, graph.num_items, dim, layers,
                           seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])
    has_val = validation is not None and len(validation) > 0
    best, best_metric, since_best = state.copy(), -np.inf, 0
    history: list[EpochStats] = []
    for epoch in range(cfg.max_epochs):
        stats = train_epoch(state, data, cfg, rng, epoch)
        if has_val:
            stats.val_metric = validation_recall(state, graph, validation, cfg.val_k)
        history.append(stats)
        logger.info("epoch %d loss %.5f noisy %d val %.5f", epoch, stats.mean_train_loss,
                    stats.sampled_noisy, stats.val_metric)
        if not has_val:
            best = state
            continue
        if stats.val_metric > best_metric:
            best, best_metric, since_best = state.copy(), stats.val_metric, 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                break
    return best, history
