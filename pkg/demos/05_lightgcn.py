"""
LightGCN propagation
====================

Propagation averages the layer outputs of D^-1/2 A D^-1/2 applied to the
stacked embeddings. Here it is checked against a dense computation and
then used as the backbone for a short PLD run.
"""

import numpy as np

from pldrec.dataset import generate_synthetic, inject_noise_ratio
from pldrec.model import init_model, propagate
from pldrec.trainer import TrainConfig, run_training

syn = generate_synthetic(40, 50, 4, 6, seed=3)
g = syn.interactions
state = init_model(40, 50, 8, layers=2, seed=0)
U, V = propagate(state, g)

# dense oracle
A = np.zeros((90, 90))
A[g.users, 40 + g.items] = A[40 + g.items, g.users] = 1
d = A.sum(1)
inv = np.where(d > 0, 1 / np.sqrt(np.maximum(d, 1)), 0)
N = inv[:, None] * A * inv[None, :]
E0 = np.vstack([state.user_embeddings, state.item_embeddings])
E = (E0 + N @ E0 + N @ N @ E0) / 3
E[d == 0] = E0[d == 0]  # isolated nodes keep their own embedding
print("max deviation from dense:", np.abs(np.vstack([U, V]) - E).max())

noisy = inject_noise_ratio(g, 0.2, seed=1)
_, hist = run_training(noisy, None, TrainConfig(denoiser="pld", max_epochs=10, patience=None),
                       dim=16, layers=2)
for h in hist[::3]:
    print(f"epoch {h.epoch}: loss {h.mean_train_loss:.4f}, noisy positives {h.sampled_noisy}")
