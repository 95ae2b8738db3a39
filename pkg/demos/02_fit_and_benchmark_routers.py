"""Fit every router family on a synthetic benchmark and compare Pareto AUCs.

The benchmark has a known locality structure, so neighborhood methods have
real signal to exploit. Oracle and random rows bound the table from above
and below.

Run with: python demos/02_fit_and_benchmark_routers.py
"""

from routebench import RouterConfig, SplitSpec, c_max, split_dataset
from routebench.analysis import SyntheticConfig, generate_synthetic
from routebench.eval import (
    EvalNorm,
    default_lambda_grid,
    evaluate_utility_router,
    oracle_curve,
    random_curve,
    render_table,
)
from routebench.routers import fit_router

dataset = generate_synthetic(
    SyntheticConfig(
        latent_dim=2, ambient_dim=16, n_models=4, lipschitz_l=2.0,
        noise_sd=0.02, n_queries=600, seed=7,
    )
)
split = split_dataset(dataset, SplitSpec(seed=0))
print(
    f"benchmark: {len(dataset)} queries, {len(dataset.catalog)} models -> "
    f"train {len(split.train)} / val {len(split.val)} / test {len(split.test)}"
)

benchmark_cmax = c_max(dataset)
grid = default_lambda_grid(benchmark_cmax)
norm = EvalNorm.for_benchmark(split.test, benchmark_cmax)

rows = {
    "oracle": {"synthetic": oracle_curve(split.test, grid, norm).auc},
    "random": {"synthetic": random_curve(split.test, norm).auc},
}

# The MF head has a single scalar bias, so per-model target levels are
# outside its span; per-model target standardization restores them.
configs = {
    "knn": RouterConfig(k=16),
    "linear": RouterConfig(),
    "linear_mf": RouterConfig(
        model_embed_dim=16, learning_rate=0.6, epochs=300, standardize_targets=True
    ),
    "mlp": RouterConfig(learning_rate=0.2, epochs=150),
    "mlp_mf": RouterConfig(model_embed_dim=16, learning_rate=0.2, epochs=80),
}
for arch, config in configs.items():
    router = fit_router(
        split.train, arch, "utility", config=config, val=split.val,
        c_max=benchmark_cmax,
    )
    curve = evaluate_utility_router(router, split.test, grid, norm)
    rows[arch] = {"synthetic": curve.auc}
    print(f"fitted {arch:10s} AUC {curve.auc:6.2f}")

print()
print(render_table("Pareto hull AUC (max 100)", rows))
