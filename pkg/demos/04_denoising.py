"""
Training with and without PLD on injected noise
===============================================

Same data, same seed; only the positive-selection rule changes.
sampled_noisy counts how many optimised positives were injected noise.
Takes about a minute.
"""

from pldrec.dataset import NoisyTrainSet, generate_synthetic, inject_noise_ratio, split
from pldrec.evaluation import evaluate
from pldrec.sampler import ResampleConfig
from pldrec.trainer import TrainConfig, run_training

syn = generate_synthetic(500, 500, 8, 40, seed=0)
sp = split(syn.interactions, 0.8, 0.1, seed=0)
noisy = inject_noise_ratio(sp.train, 0.3, seed=1, forbidden=[sp.validation, sp.test])
seen = noisy.observed.union(sp.validation)

runs = {
    "none": (noisy, TrainConfig(denoiser="none")),
    "pld": (noisy, TrainConfig(denoiser="pld", resample=ResampleConfig(k=5, tau=0.1))),
    "rce": (noisy, TrainConfig(denoiser="rce", rce_beta=1.0)),
    "tce": (noisy, TrainConfig(denoiser="tce")),
    "noiseless": (NoisyTrainSet.clean(sp.train), TrainConfig(denoiser="none")),
}
for name, (data, cfg) in runs.items():
    cfg.learning_rate, cfg.weight_decay, cfg.max_epochs = 0.05, 1e-3, 200
    state, hist = run_training(data, sp.validation, cfg, dim=64)
    rep = evaluate(state, seen, sp.test, (20, 50))
    last = hist[-1]
    share = last.sampled_noisy / (last.sampled_noisy + last.sampled_normal)
    print(f"{name:>9}: recall@20 {rep.recall[20]:.4f}  ndcg@20 {rep.ndcg[20]:.4f}  "
          f"epochs {len(hist):>3}  noisy share of positives {share:.3f}")
