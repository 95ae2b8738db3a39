"""Empirical locality and sample-complexity machinery.

This module measures how strongly model performance varies with embedding
distance (the property that makes neighborhood routing work), estimates the
locality modulus eps(delta), bounds covering numbers greedily, builds
synthetic benchmarks with a known Lipschitz constant, and runs
regret-versus-training-size experiments comparing kNN against parametric
routers.

Distances
---------
All operations take a ``metric`` argument, either ``"euclidean"`` (default)
or ``"cosine"``. On unit-norm embeddings the two are monotonically
equivalent (euclidean = sqrt(2 * cosine)) and both range over [0, 2], so
neighbor sets and qualitative shapes are identical; euclidean is the
default because it is the metric in which the synthetic construction's
Lipschitz bound is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .core import ModelCatalog, Outcome, Pricing, QueryRecord, RoutingDataset
from .routers.base import RouterConfig, select_model
from .routers.knn import KnnIndex, fit_knn
from .routers.nets import fit_mlp_utility

METRICS = ("euclidean", "cosine")

# Fraction of the declared Lipschitz budget the synthetic construction
# spends; the slack keeps the bound strict under floating-point error.
_SYNTH_BUDGET = 0.7


def _check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; valid: {METRICS}")
    return metric


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cannot measure distances from a zero embedding")
    return matrix / norms[:, None]


def _pair_distance(unit: np.ndarray, i: np.ndarray, j: np.ndarray, metric: str):
    sims = np.einsum("ij,ij->i", unit[i], unit[j])
    cos_dist = np.clip(1.0 - sims, 0.0, 2.0)
    if metric == "cosine":
        return cos_dist
    return np.sqrt(2.0 * cos_dist)


def _sample_pairs(n: int, n_pairs: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ordered pairs with i != j, exhaustive when cheap enough."""
    total = n * (n - 1) // 2
    if total <= n_pairs:
        i, j = np.triu_indices(n, k=1)
        return i, j
    i = np.empty(n_pairs, dtype=np.int64)
    j = np.empty(n_pairs, dtype=np.int64)
    filled = 0
    while filled < n_pairs:
        need = n_pairs - filled
        a = rng.integers(0, n, size=need)
        b = rng.integers(0, n, size=need)
        keep = a != b
        kept = int(keep.sum())
        i[filled : filled + kept] = a[keep]
        j[filled : filled + kept] = b[keep]
        filled += kept
    return i, j


# ---------------------------------------------------------------------------
# Locality curve


@dataclass(frozen=True)
class LocalityCurve:
    """Binned agreement between per-model scores as a function of distance.

    ``agreement(x1, x2)`` is the fraction of models whose scores differ by
    at most tau; ``mean_spearman`` is a secondary column with the rank
    correlation of the two per-model score vectors. Bins are equal-width
    over [0, 2] and counts sum to the number of sampled pairs.
    """

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    mean_agreement: tuple[float, ...]
    sem_agreement: tuple[float, ...]
    mean_spearman: tuple[float, ...]
    tau: float
    metric: str
    n_pairs: int

    def to_jsonable(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "counts": list(self.counts),
            "mean_agreement": list(self.mean_agreement),
            "sem_agreement": list(self.sem_agreement),
            "mean_spearman": list(self.mean_spearman),
            "tau": self.tau,
            "metric": self.metric,
            "n_pairs": self.n_pairs,
        }


def locality_curve(
    dataset: RoutingDataset,
    n_pairs: int = 20000,
    bins: int = 20,
    tau: float | None = None,
    seed: int = 0,
    metric: str = "euclidean",
) -> LocalityCurve:
    """Sample query pairs and bin score agreement by embedding distance.

    ``tau`` defaults to half the standard deviation of all scores in the
    dataset, so the agreement threshold adapts to each benchmark's units.
    """
    metric = _check_metric(metric)
    n = len(dataset)
    if n < 2:
        raise ValueError("locality needs at least two records")
    if n_pairs < 1 or bins < 1:
        raise ValueError("n_pairs and bins must be >= 1")
    S = dataset.score_matrix
    if tau is None:
        tau = 0.5 * float(S.std())
    if not tau > 0:
        raise ValueError("tau must be positive (scores may be constant)")
    rng = np.random.default_rng(seed)
    unit = _unit_rows(dataset.embedding_matrix)
    i, j = _sample_pairs(n, n_pairs, rng)
    dist = _pair_distance(unit, i, j, metric)
    agreement = (np.abs(S[i] - S[j]) <= tau).mean(axis=1)

    ranks = rankdata(S, axis=1)
    centered = ranks - ranks.mean(axis=1, keepdims=True)
    num = np.einsum("ij,ij->i", centered[i], centered[j])
    den = np.linalg.norm(centered[i], axis=1) * np.linalg.norm(centered[j], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        spearman = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)

    width = 2.0 / bins
    bin_idx = np.clip((dist / width).astype(np.int64), 0, bins - 1)
    edges = tuple(float(width * b) for b in range(bins + 1))
    counts, mean_agree, sem_agree, mean_rho = [], [], [], []
    for b in range(bins):
        mask = bin_idx == b
        count = int(mask.sum())
        counts.append(count)
        if count == 0:
            mean_agree.append(math.nan)
            sem_agree.append(math.nan)
            mean_rho.append(math.nan)
            continue
        vals = agreement[mask]
        mean_agree.append(float(vals.mean()))
        sem_agree.append(
            float(vals.std(ddof=1) / math.sqrt(count)) if count > 1 else math.nan
        )
        rho = spearman[mask]
        rho = rho[np.isfinite(rho)]
        mean_rho.append(float(rho.mean()) if rho.size else math.nan)
    return LocalityCurve(
        bin_edges=edges,
        counts=tuple(counts),
        mean_agreement=tuple(mean_agree),
        sem_agreement=tuple(sem_agree),
        mean_spearman=tuple(mean_rho),
        tau=float(tau),
        metric=metric,
        n_pairs=len(i),
    )


# ---------------------------------------------------------------------------
# Locality modulus estimate


def epsilon_hat(
    dataset: RoutingDataset,
    delta: float,
    quantile: float = 0.95,
    lam: float = 0.0,
    n_pairs: int = 100000,
    seed: int = 0,
    metric: str = "euclidean",
) -> float | None:
    """Empirical locality modulus at radius delta.

    Over sampled pairs closer than delta, returns the given quantile of
    ``max_m |u(x1, m) - u(x2, m)|`` where u uses the supplied lam (0 means
    pure score). Returns ``None`` when no sampled pair falls within delta;
    with a fixed seed the pair sample is shared across deltas, so the
    estimate is non-decreasing in delta.
    """
    metric = _check_metric(metric)
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two records")
    rng = np.random.default_rng(seed)
    unit = _unit_rows(dataset.embedding_matrix)
    i, j = _sample_pairs(n, n_pairs, rng)
    dist = _pair_distance(unit, i, j, metric)
    close = dist < delta
    if not close.any():
        return None
    U = dataset.score_matrix - lam * dataset.cost_matrix
    diffs = np.abs(U[i[close]] - U[j[close]]).max(axis=1)
    return float(np.quantile(diffs, quantile))


# ---------------------------------------------------------------------------
# Covering numbers


def covering_number(
    embeddings: np.ndarray, radius: float, metric: str = "euclidean"
) -> int:
    """Greedy upper bound on the covering number of a point cloud.

    Scans points in index order, repeatedly taking the first uncovered
    point as a center and covering everything within ``radius``. The count
    upper-bounds the optimal covering number (centers restricted to data
    points at most double it).
    """
    metric = _check_metric(metric)
    if not radius > 0:
        raise ValueError("radius must be positive")
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("embeddings must be a nonempty (n, dim) matrix")
    if metric == "cosine":
        points = _unit_rows(points)
    uncovered = np.ones(points.shape[0], dtype=bool)
    centers = 0
    while uncovered.any():
        center = int(np.argmax(uncovered))
        centers += 1
        if metric == "cosine":
            dist = np.clip(1.0 - points @ points[center], 0.0, 2.0)
        else:
            dist = np.linalg.norm(points - points[center], axis=1)
        uncovered &= dist > radius
    return centers


# ---------------------------------------------------------------------------
# Synthetic Lipschitz benchmarks


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for a benchmark with a known locality modulus.

    Queries are sampled uniformly on the ``latent_dim``-sphere (the unit
    sphere in latent_dim + 1 coordinates, so the cloud's intrinsic
    dimension is latent_dim) and embedded isometrically into
    ``ambient_dim`` coordinates. Per-model scores are clipped
    affine-plus-sinusoid functions of the latent point whose euclidean
    Lipschitz constant stays strictly below ``lipschitz_l``; costs are
    distinct per-model constants, so utilities inherit the same bound at
    every lam.
    """

    latent_dim: int = 2
    ambient_dim: int = 16
    n_models: int = 4
    lipschitz_l: float = 2.0
    noise_sd: float = 0.0
    n_queries: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.ambient_dim < self.latent_dim + 1:
            raise ValueError(
                "ambient_dim must be >= latent_dim + 1 (the latent sphere "
                f"needs {self.latent_dim + 1} coordinates)"
            )
        if self.n_models < 1 or self.n_queries < 1:
            raise ValueError("n_models and n_queries must be >= 1")
        if not (math.isfinite(self.lipschitz_l) and self.lipschitz_l > 0):
            raise ValueError("lipschitz_l must be positive and finite")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _unit_vector(rng, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def generate_synthetic(config: SyntheticConfig) -> RoutingDataset:
    """Seeded synthetic routing benchmark with a certified Lipschitz bound.

    With ``noise_sd == 0`` every pair of queries satisfies
    ``|s(x1, m) - s(x2, m)| <= lipschitz_l * d(x1, x2)`` in the euclidean
    metric, for every model.
    """
    rng = np.random.default_rng(config.seed)
    sphere_dim = config.latent_dim + 1
    n, n_models = config.n_queries, config.n_models

    Z = rng.standard_normal((n, sphere_dim))
    norms = np.linalg.norm(Z, axis=1)
    for row in np.flatnonzero(norms < 1e-9):
        Z[row] = _unit_vector(rng, sphere_dim)
        norms[row] = 1.0
    Z = Z / np.linalg.norm(Z, axis=1)[:, None]

    basis = np.linalg.qr(rng.standard_normal((config.ambient_dim, sphere_dim)))[0]
    X = Z @ basis.T  # isometric: unit rows, pairwise distances preserved

    c_lo = rng.uniform(0.02, 0.10)
    c_hi = rng.uniform(0.5, 1.5)
    if n_models == 1:
        costs = np.array([c_hi])
    else:
        costs = np.linspace(c_lo, c_hi, n_models)

    budget = _SYNTH_BUDGET * config.lipschitz_l
    S = np.empty((n, n_models))
    for m in range(n_models):
        linear_dir = _unit_vector(rng, sphere_dim)
        wave_dir = _unit_vector(rng, sphere_dim)
        freq = rng.uniform(1.5, 4.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = 0.5 * budget / freq
        base = 0.35 + 0.3 * (costs[m] - costs[0]) / max(costs[-1] - costs[0], 1e-12)
        raw = (
            base
            + 0.5 * budget * (Z @ linear_dir)
            + amp * np.sin(freq * (Z @ wave_dir) + phase)
        )
        if config.noise_sd > 0:
            raw = raw + rng.normal(0.0, config.noise_sd, size=n)
        S[:, m] = np.clip(raw, 0.0, 1.0)

    names = tuple(f"m{m:02d}" for m in range(n_models))
    catalog = ModelCatalog(
        entries=tuple(
            (name, Pricing(float(costs[m]), float(costs[m])))
            for m, name in enumerate(names)
        )
    )
    records = tuple(
        QueryRecord(
            id=f"syn-{i:05d}",
            embedding=X[i],
            outcomes={
                name: Outcome(score=float(S[i, m]), cost=float(costs[m]))
                for m, name in enumerate(names)
            },
        )
        for i in range(n)
    )
    meta = (
        f"synthetic(latent_dim={config.latent_dim}, ambient_dim={config.ambient_dim}, "
        f"n_models={n_models}, lipschitz_l={config.lipschitz_l}, "
        f"noise_sd={config.noise_sd}, n_queries={n}, seed={config.seed})"
    )
    return RoutingDataset(catalog=catalog, records=records, meta=meta)


# ---------------------------------------------------------------------------
# kNN radius


def knn_radius(
    index: KnnIndex, x: np.ndarray, k: int, metric: str = "euclidean"
) -> float:
    """Distance from x to its k-th nearest stored point."""
    metric = _check_metric(metric)
    if k < 1 or k > len(index):
        raise ValueError(f"k must be in [1, {len(index)}], got {k}")
    _, sims = index.neighbors(x, k)
    cos_dist = max(0.0, 1.0 - float(sims[-1]))
    if metric == "cosine":
        return cos_dist
    return math.sqrt(2.0 * cos_dist)


# ---------------------------------------------------------------------------
# Regret experiments


@dataclass(frozen=True)
class RegretCurve:
    """Mean routing regret per (architecture, training-set size).

    ``bound`` is the 2 * eps_hat(delta_k(n)) column implied by the locality
    modulus at the observed mean k-th-neighbor radius; regrets are
    nonnegative by construction (oracle utility minus achieved utility).
    """

    train_sizes: tuple[int, ...]
    archs: tuple[str, ...]
    mean_regret: dict[str, tuple[float, ...]]
    stderr: dict[str, tuple[float, ...]]
    mean_radius: tuple[float, ...]
    bound: tuple[float, ...]
    lam: float
    k: int
    trials: int
    metric: str

    def to_jsonable(self) -> dict:
        return {
            "train_sizes": list(self.train_sizes),
            "archs": list(self.archs),
            "mean_regret": {a: list(v) for a, v in self.mean_regret.items()},
            "stderr": {a: list(v) for a, v in self.stderr.items()},
            "mean_knn_radius": list(self.mean_radius),
            "bound_2eps": list(self.bound),
            "lambda": self.lam,
            "k": self.k,
            "trials": self.trials,
            "metric": self.metric,
        }


def _default_regret_net_config(seed: int) -> RouterConfig:
    return RouterConfig(
        learning_rate=0.05,
        epochs=60,
        batch_size=32,
        seed=seed,
        standardize_targets=False,
    )


def regret_experiment(
    config: SyntheticConfig,
    train_sizes,
    k: int,
    lam: float,
    trials: int,
    arch_list=("knn", "mlp"),
    router_config: RouterConfig | None = None,
    test_size: int = 200,
    bound_quantile: float = 0.95,
    bound_pairs: int = 200000,
    metric: str = "euclidean",
) -> RegretCurve:
    """Regret versus training-set size, averaged over resampled trials.

    Each trial regenerates the synthetic benchmark with a shifted seed,
    fits every architecture on the first n training records for each n,
    and measures regret on a fixed held-out test set. The mean
    k-th-neighbor radius delta_k(n) and the implied 2 * eps_hat bound are
    recorded alongside.
    """
    metric = _check_metric(metric)
    train_sizes = [int(n) for n in train_sizes]
    if any(b <= a for a, b in zip(train_sizes, train_sizes[1:])):
        raise ValueError("train_sizes must be strictly ascending")
    if trials < 3:
        raise ValueError("trials must be >= 3")
    max_n = max(train_sizes)
    if max_n + test_size > config.n_queries:
        raise ValueError(
            f"train size {max_n} plus test size {test_size} exceeds the "
            f"{config.n_queries} available records"
        )
    archs = tuple(arch_list)
    unsupported = set(archs) - {"knn", "mlp", "linear", "linear_mf", "mlp_mf"}
    if unsupported:
        raise ValueError(f"unsupported architectures {sorted(unsupported)}")

    per_trial = {arch: np.zeros((trials, len(train_sizes))) for arch in archs}
    radii = np.zeros((trials, len(train_sizes)))
    bounds = np.full((trials, len(train_sizes)), np.nan)

    for trial in range(trials):
        ds = generate_synthetic(replace(config, seed=config.seed + trial))
        test = ds.subset(range(max_n, max_n + test_size))
        U_true = test.score_matrix - lam * test.cost_matrix
        u_star = U_true.max(axis=1)
        name_to_col = {name: c for c, name in enumerate(ds.catalog.names)}

        for size_idx, n in enumerate(train_sizes):
            sub = ds.subset(range(n))
            k_eff = min(k, n)
            for arch in archs:
                router = _fit_regret_arch(
                    arch, sub, k, router_config, config.seed + trial
                )
                regrets = np.empty(len(test))
                for q, record in enumerate(test.records):
                    chosen = select_model(router, record.embedding, lam)
                    regrets[q] = u_star[q] - U_true[q, name_to_col[chosen]]
                per_trial[arch][trial, size_idx] = float(regrets.mean())
                if arch == "knn":
                    index = router.index
                    rad = np.empty(len(test))
                    for q, record in enumerate(test.records):
                        rad[q] = knn_radius(index, record.embedding, k_eff, metric)
                    radii[trial, size_idx] = float(rad.mean())
            if "knn" in archs and radii[trial, size_idx] > 0:
                eps = epsilon_hat(
                    ds,
                    delta=float(radii[trial, size_idx]),
                    quantile=bound_quantile,
                    lam=lam,
                    n_pairs=bound_pairs,
                    seed=config.seed + trial,
                    metric=metric,
                )
                if eps is not None:
                    bounds[trial, size_idx] = 2.0 * eps

    mean_regret = {}
    stderr = {}
    for arch in archs:
        vals = per_trial[arch]
        mean_regret[arch] = tuple(float(v) for v in vals.mean(axis=0))
        stderr[arch] = tuple(
            float(v) for v in vals.std(axis=0, ddof=1) / math.sqrt(trials)
        )
    return RegretCurve(
        train_sizes=tuple(train_sizes),
        archs=archs,
        mean_regret=mean_regret,
        stderr=stderr,
        mean_radius=tuple(float(v) for v in radii.mean(axis=0)),
        bound=tuple(float(v) for v in np.nanmean(bounds, axis=0)),
        lam=float(lam),
        k=int(k),
        trials=int(trials),
        metric=metric,
    )


def _fit_regret_arch(arch, train, k, router_config, seed):
    if arch == "knn":
        return fit_knn(train, RouterConfig(k=k))
    cfg = (
        replace(router_config, seed=seed)
        if router_config is not None
        else _default_regret_net_config(seed)
    )
    if arch == "mlp":
        return fit_mlp_utility(train, cfg)
    from .routers import fit_router

    return fit_router(train, arch, "utility", cfg)
