"""
How the temperature shapes loss-based resampling
================================================

A pool of five candidates with fixed losses, resampled at a few
temperatures. Small tau concentrates on the smallest loss, large tau
flattens towards uniform.
"""

import numpy as np

from pldrec.sampler import resample_batch, resample_probabilities

losses = np.array([0.2, 0.35, 0.5, 1.1, 1.6])  # last two look like noise

for tau in (0.01, 0.05, 0.1, 0.5, 1.0, 10.0):
    p = resample_probabilities(losses, tau)
    print(f"tau={tau:<5} p={np.round(p, 3)}  mass on the two high losses={p[3:].sum():.3f}")

# the empirical frequencies follow the closed form
rng = np.random.default_rng(0)
picks = resample_batch(np.tile(losses, (50_000, 1)), 0.1, rng)
print("empirical at tau=0.1:", np.round(np.bincount(picks, minlength=5) / picks.size, 3))

# adding a constant to every loss changes nothing
print(np.allclose(resample_probabilities(losses + 7.0, 0.1), resample_probabilities(losses, 0.1)))
