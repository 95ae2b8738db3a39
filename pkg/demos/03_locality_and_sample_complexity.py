"""Why kNN routing works: locality curves, covering numbers, and regret.

Three empirical probes on a synthetic benchmark whose locality modulus is
known by construction:

1. score agreement between query pairs falls off with embedding distance;
2. greedy covering numbers recover the intrinsic dimension of the cloud;
3. kNN regret shrinks with training data, stays under the 2 * eps(delta_k)
   locality bound, and reaches low regret with far fewer samples than an
   MLP trained on the same data.

Run with: python demos/03_locality_and_sample_complexity.py
"""

import numpy as np

from routebench.analysis import (
    SyntheticConfig,
    covering_number,
    epsilon_hat,
    generate_synthetic,
    locality_curve,
    regret_experiment,
)

config = SyntheticConfig(
    latent_dim=2, ambient_dim=16, n_models=4, lipschitz_l=2.0,
    noise_sd=0.0, n_queries=1000, seed=42,
)
dataset = generate_synthetic(config)

# 1. Locality: nearby queries agree on per-model scores.
curve = locality_curve(dataset, n_pairs=30000, bins=10, seed=0)
print("distance bin        pairs   agreement   spearman")
for b in range(len(curve.counts)):
    lo, hi = curve.bin_edges[b], curve.bin_edges[b + 1]
    if curve.counts[b] == 0:
        continue
    print(
        f"[{lo:4.2f}, {hi:4.2f})   {curve.counts[b]:8d}   {curve.mean_agreement[b]:9.3f}"
        f"   {curve.mean_spearman[b]:8.3f}"
    )

# The empirical locality modulus stays under the construction's bound.
print("\ndelta    eps_hat(delta)   L * delta")
for delta in (0.1, 0.2, 0.4, 0.8):
    eps = epsilon_hat(dataset, delta, seed=3)
    print(f"{delta:5.2f}   {eps:14.4f}   {config.lipschitz_l * delta:9.4f}")

# 2. Covering numbers: the log-log slope tracks the intrinsic dimension.
radii = np.geomspace(0.15, 1.5, 8)
counts = [covering_number(dataset.embedding_matrix, r / 2) for r in radii]
slope = np.polyfit(np.log(1.0 / radii), np.log(counts), 1)[0]
print(f"\ngreedy covering counts over one decade of radius: {counts}")
print(f"log-log slope {slope:.2f} (latent dimension is {config.latent_dim})")

# 3. Regret versus training size, kNN against an MLP.
curve = regret_experiment(
    config, [50, 100, 200, 400, 800], k=10, lam=0.5, trials=3,
    arch_list=("knn", "mlp"), test_size=200,
)
print("\n    n    knn regret    mlp regret    2*eps(delta_k)")
for idx, n in enumerate(curve.train_sizes):
    print(
        f"{n:5d}   {curve.mean_regret['knn'][idx]:11.5f}"
        f"   {curve.mean_regret['mlp'][idx]:11.5f}"
        f"   {curve.bound[idx]:14.5f}"
    )
print("\nkNN sits under the locality bound at every n and needs far fewer")
print("samples than the MLP to reach the same regret.")
