"""Acceptance gate: one PASS/FAIL line per criterion, at its pinned tolerance."""

import logging
import math
import time
from itertools import product

import numpy as np
import pytest
from scipy import stats

from pldrec.analytics import overlap_stats
from pldrec.dataset import (InteractionSet, NoisyTrainSet, generate_synthetic, inject_noise_ratio,
                            split)
from pldrec.evaluation import evaluate
from pldrec.loss import LossKind
from pldrec.model import save_checkpoint
from pldrec.sampler import ResampleConfig, draw_pools_batch, resample_batch
from pldrec.theory import TheoremParams, prop1_moments, simulate_lambda, theorem_expectation
from pldrec.trainer import Denoiser, TrainConfig, run_training

from .test_analytics import synthetic_record
from .test_evaluation import brute_force_metrics, random_instance, _state_with_scores
from .test_loss import max_fd_rel_error
logger = logging.getLogger(__name__)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok
    return emit


def test_c01_theorem_vs_simulation(report):
    t0 = time.perf_counter()
    grid = [TheoremParams(n, m, 1.0, 1.0 + d, s, k, tau)
            for n, m, d, s, k, tau in product([20, 50, 100], [2, 5, 10], [0.5, 1, 2],
                                              [0.2, 0.5], [3, 5, 10], [0.5, 1])]
    ss = np.random.SeedSequence(2024).spawn(len(grid))
    ok, outliers = 0, []
    for p, child in zip(grid, ss):
        cf = theorem_expectation(p)
        est, se = simulate_lambda(p, 100_000, seed=int(child.generate_state(1)[0]))
        if abs(cf - est) <= max(0.05, 6 * se):
            ok += 1
        else:
            outliers.append((p, cf, est))
            logger.warning("outside band: %s closed=%.4f sim=%.4f se=%.4f", p, cf, est, se)
    elapsed = time.perf_counter() - t0
    frac = ok / len(grid)
    worst = max(outliers, key=lambda o: abs(o[1] - o[2]), default=None)
    detail = f"{ok}/{len(grid)} points in band ({frac:.1%}, need >= 90%), {elapsed:.0f}s"
    if worst:
        p, cf, est = worst
        detail += (f"; worst n={p.n} m={p.m} dmu={p.mu2 - p.mu1:g} sigma={p.sigma} k={p.k} "
                   f"tau={p.tau}: closed {cf:.3f} vs sim {est:.3f}")
    assert report(1, "closed form vs Monte Carlo", frac >= 0.9 and elapsed < 120, detail)


def test_c02_pool_sum_moments(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10):
        k = int(rng.integers(1, 15))
        n, m = int(rng.integers(0, 30)), int(rng.integers(0, 30))
        if n + m == 0:
            n = 1
        mu, sigma = float(rng.uniform(0, 2)), float(rng.uniform(0, 0.8))
        N = 1_000_000
        normal = rng.random((N, k)) < n / (n + m)
        s = np.where(normal, np.exp(-(mu + sigma * rng.standard_normal((N, k)))), 0.0).sum(axis=1)
        mean, var = prop1_moments(k, n, m, mu, sigma)
        c = s - s.mean()
        se_mean = math.sqrt(var / N)
        se_var = math.sqrt(max(np.mean(c ** 4) - var ** 2, 0.0) / N)
        for diff, se in ((s.mean() - mean, se_mean), (s.var(ddof=1) - var, se_var)):
            z = 0.0 if diff == 0 else abs(diff) / se
            worst = max(worst, z)
    elapsed = time.perf_counter() - t0
    assert report(2, "moment formulas vs 1e6-trial Monte Carlo", worst <= 3 and elapsed < 60,
                  f"largest deviation {worst:.2f} SE (need <= 3), {elapsed:.0f}s")


def test_c03_k1_degeneracy(report):
    rng = np.random.default_rng(3)
    g = InteractionSet.from_pairs(5, 40, [(u, i) for u in range(5)
                                          for i in rng.choice(40, 4 + 3 * u, replace=False)])
    pvals = []
    for u in range(5):
        users = np.full(100_000, u)
        pools = draw_pools_batch(users, g, 1, rng)
        losses = rng.exponential(size=pools.shape)
        picks = pools[np.arange(users.size), resample_batch(losses, 0.1, rng)]
        counts = np.array([np.sum(picks == i) for i in g.items_of(u)])
        pvals.append(stats.chisquare(counts).pvalue)
    exact = all(theorem_expectation(TheoremParams(n, m, 1.0, 2.0, 0.3, k=1)) == (n - m) / (n + m)
                for n, m in [(9, 1), (50, 10), (3, 0), (7, 7)])
    ok = min(pvals) > 0.01 and exact
    assert report(3, "k=1 selection is uniform", ok,
                  f"min chi-square p = {min(pvals):.3f} (need > 0.01), closed form exact: {exact}")


def test_c04_temperature_limits(report):
    rng = np.random.default_rng(4)
    losses = np.array([0.9, 0.3, 0.5, 0.31, 2.0])
    cold = np.mean(resample_batch(np.tile(losses, (10_000, 1)), 1e-6, rng) == 1)
    picks = resample_batch(np.tile(losses, (100_000, 1)), 1e6, rng)
    sup = np.max(np.abs(np.bincount(picks, minlength=5) / picks.size - 0.2))
    assert report(4, "temperature limits", cold > 0.999 and sup <= 0.01,
                  f"argmin frequency at tau=1e-6 {cold:.4f} (need > 0.999); "
                  f"sup-norm from uniform at tau=1e6 {sup:.4f} (need <= 0.01)")


def _noisy_fraction(seed, tau, k=5, num_users=200, per_user=50, draws=10_000):
    rng = np.random.default_rng(seed)
    n_noisy = int(0.2 * per_user)
    users = np.repeat(np.arange(num_users), per_user)
    items = np.tile(np.arange(per_user), num_users)
    g = InteractionSet(num_users, per_user, users, items)
    is_noisy = items >= per_user - n_noisy
    base = rng.uniform(0, 3, num_users)[users]
    losses = base + np.where(is_noisy, 1.0, 0.0) + 0.3 * rng.standard_normal(users.size)
    u = rng.integers(0, num_users, draws)
    if tau is None:
        chosen = draw_pools_batch(u, g, 1, rng)[:, 0]
    else:
        pools = draw_pools_batch(u, g, k, rng)
        pos = g.lookup(np.repeat(u, k), pools.ravel()).reshape(pools.shape)
        chosen = pools[np.arange(draws), resample_batch(losses[pos], tau, rng)]
    return float(np.mean(is_noisy[g.lookup(u, chosen)]))


def test_c05_noise_sampling_reduction(report):
    pld = np.mean([_noisy_fraction(s, 0.1) for s in range(5)])
    uniform = np.mean([_noisy_fraction(s, None) for s in range(5)])
    assert report(5, "noisy selections under PLD", pld <= uniform / 2,
                  f"PLD {pld:.4f} vs uniform {uniform:.4f} (need PLD <= {uniform / 2:.4f})")


def _e2e_run(seed, denoiser, tau=0.1, clean=False):
    syn = generate_synthetic(500, 500, 8, 40, seed=seed)
    sp = split(syn.interactions, 0.8, 0.1, seed=seed)
    if clean:
        noisy = NoisyTrainSet.clean(sp.train)
    else:
        noisy = inject_noise_ratio(sp.train, 0.3, seed=seed + 1, forbidden=[sp.validation, sp.test])
    cfg = TrainConfig(loss_kind=LossKind.BPR, denoiser=denoiser, resample=ResampleConfig(5, tau),
                      learning_rate=0.05, weight_decay=1e-3, batch_size=1024, max_epochs=200,
                      patience=10, seed=seed)
    state, hist = run_training(noisy, sp.validation, cfg, dim=64)
    seen = noisy.observed.union(sp.validation)
    test_recall = evaluate(state, seen, sp.test, (20,)).recall[20]
    return max(h.val_metric for h in hist), test_recall


@pytest.mark.slow
def test_c06_end_to_end_gain(report):
    t0 = time.perf_counter()
    none, pld, clean = [], [], []
    for seed in range(5):
        none.append(_e2e_run(seed, Denoiser.NONE)[1])
        # tau chosen per seed on validation recall
        candidates = [_e2e_run(seed, Denoiser.PLD, tau) for tau in (0.05, 0.1)]
        pld.append(max(candidates)[1])
        clean.append(_e2e_run(seed, Denoiser.NONE, clean=True)[1])
    elapsed = time.perf_counter() - t0
    a, b, c = np.mean(none), np.mean(pld), np.mean(clean)
    ok = b > a and c > a and c > b and elapsed < 900
    assert report(6, "end-to-end Recall@20", ok,
                  f"none {a:.4f}, PLD {b:.4f}, noiseless {c:.4f} over 5 seeds, {elapsed:.0f}s")


def test_c07_overlap_direction(report):
    rec = synthetic_record(np.random.default_rng(7), num_users=300, per_user=40, noise=0.3,
                           offset_high=3.0, gap=1.0, sigma=0.3)
    g, p = overlap_stats(rec, "global"), overlap_stats(rec, "personal")
    ok = p.normal_ratio < g.normal_ratio / 2 and p.noise_ratio < g.noise_ratio / 2
    assert report(7, "personal vs global overlap", ok,
                  f"normal {p.normal_ratio:.3f} vs {g.normal_ratio:.3f}, "
                  f"noisy {p.noise_ratio:.3f} vs {g.noise_ratio:.3f} (personal must be < half)")


def test_c08_metric_oracle(report):
    rng = np.random.default_rng(8)
    worst, checked = 0.0, 0
    while checked < 100:
        scores, train, test = random_instance(rng)
        if not test:
            continue
        nu, ni = scores.shape
        tr, te = InteractionSet.from_pairs(nu, ni, train), InteractionSet.from_pairs(nu, ni, test)
        for K in (1, 5, 10):
            rep = evaluate(_state_with_scores(scores), tr, te, (K,))
            rec, ndcg = brute_force_metrics(scores, train, test, K)
            worst = max(worst, abs(rep.recall[K] - rec), abs(rep.ndcg[K] - ndcg))
        checked += 1
    assert report(8, "metrics vs brute-force oracle", worst <= 1e-9,
                  f"max abs difference {worst:.2e} over 100 instances (need <= 1e-9)")


def test_c09_gradients(report):
    worst = {kind.value: max(max_fd_rel_error(kind, 1000 + s) for s in range(100))
             for kind in LossKind}
    ok = max(worst.values()) < 1e-4
    assert report(9, "analytic vs finite-difference gradients", ok,
                  ", ".join(f"{k} max rel err {v:.1e}" for k, v in worst.items()) + " (need < 1e-4)")


def test_c10_label_isolation(report, tmp_path):
    syn = generate_synthetic(120, 150, 8, 20, seed=10)
    sp = split(syn.interactions, 0.8, 0.1, seed=10)
    noisy = inject_noise_ratio(sp.train, 0.3, seed=11, forbidden=[sp.validation, sp.test])
    same = []
    for d in Denoiser:
        cfg = TrainConfig(denoiser=d, max_epochs=5, patience=None, batch_size=256, seed=3)
        paths = []
        for tag, data in (("labeled", noisy), ("erased", noisy.erase_labels())):
            state, _ = run_training(data, sp.validation, cfg, dim=16)
            paths.append(tmp_path / f"{d.value}_{tag}.npz")
            save_checkpoint(paths[-1], state)
        same.append(paths[0].read_bytes() == paths[1].read_bytes())
    assert report(10, "noise labels are telemetry only", all(same),
                  f"bitwise-identical checkpoints for {sum(same)}/{len(same)} denoisers")
