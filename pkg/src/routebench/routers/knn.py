"""Exact cosine-similarity kNN router over a stored support set.

The index keeps the training split verbatim: unit-norm embeddings plus the
per-record score and cost matrices. Utility prediction averages the k
nearest neighbors' outcomes per model; selection lets each neighbor vote
for its own best model and takes the plurality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import (
    ModelCatalog,
    RoutingDataset,
    UtilityEstimate,
    argmax_utility_index,
)
from .base import FittedRouter, RouterConfig

NORM_ATOL = 1e-6


@dataclass(frozen=True, eq=False)
class KnnIndex:
    """Immutable support set: embeddings, outcomes, and the catalog."""

    catalog: ModelCatalog
    ids: tuple[str, ...]
    embeddings: np.ndarray  # (n, dim), unit rows
    scores: np.ndarray  # (n, n_models)
    costs: np.ndarray  # (n, n_models)

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        scores = np.asarray(self.scores, dtype=np.float64)
        costs = np.asarray(self.costs, dtype=np.float64)
        n = len(self.ids)
        if emb.shape[0] != n or scores.shape[0] != n or costs.shape[0] != n:
            raise ValueError("index arrays must all have one row per record")
        for arr in (emb, scores, costs):
            arr.flags.writeable = False
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "costs", costs)
        # Lexicographic rank of each id, used to break similarity ties.
        ranks = np.empty(n, dtype=np.int64)
        ranks[np.argsort(np.array(self.ids))] = np.arange(n)
        ranks.flags.writeable = False
        object.__setattr__(self, "_id_ranks", ranks)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def neighbors(self, x: np.ndarray, k: int):
        """Indices of the min(k, n) most cosine-similar records.

        Similarity ties are broken by record id (byte order) so neighbor
        sets are reproducible regardless of insertion order.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self) == 0:
            raise RuntimeError("empty index")
        x = np.asarray(x, dtype=np.float64)
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            raise ValueError("query embedding must be nonzero")
        sims = self.embeddings @ (x / norm)
        order = np.lexsort((self._id_ranks, -sims))
        k_eff = min(int(k), len(self))
        return order[:k_eff], sims[order[:k_eff]]


def fit_knn(train: RoutingDataset, config: RouterConfig | None = None) -> "KnnRouter":
    """Build a kNN router from a training split.

    Embeddings must already be unit-norm; pass ``auto_normalize=True`` in
    the config to normalize on the way in instead of erroring.
    """
    config = config if config is not None else RouterConfig()
    emb = train.embedding_matrix
    norms = np.linalg.norm(emb, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_ATOL):
        if not config.auto_normalize:
            raise ValueError(
                "training embeddings are not unit-norm; normalize the dataset "
                "first or set auto_normalize=True"
            )
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero embedding")
        emb = emb / norms[:, None]
    index = KnnIndex(
        catalog=train.catalog,
        ids=train.ids,
        embeddings=emb,
        scores=train.score_matrix,
        costs=train.cost_matrix,
    )
    meta = {"c_max": float(train.cost_matrix.max()), "n_train": len(train)}
    return KnnRouter(index=index, config=config, formulation="utility", meta=meta)


def knn_predict(
    index: KnnIndex, x: np.ndarray, k: int, weighted: bool = False
) -> UtilityEstimate:
    """Per-model mean of the k nearest neighbors' scores and costs.

    ``weighted=True`` switches to a similarity-weighted mean (weights are
    similarities clipped at zero, uniform fallback when all vanish); the
    default is the plain mean.
    """
    idx, sims = index.neighbors(x, k)
    if weighted:
        w = np.clip(sims, 0.0, None)
        total = w.sum()
        if total <= 0.0:
            w = np.ones_like(w)
            total = w.sum()
        w = w / total
        scores = w @ index.scores[idx]
        costs = w @ index.costs[idx]
    else:
        scores = index.scores[idx].mean(axis=0)
        costs = index.costs[idx].mean(axis=0)
    return UtilityEstimate(models=index.catalog.names, scores=scores, costs=costs)


def knn_select(index: KnnIndex, x: np.ndarray, k: int, lam: float) -> str:
    """Majority vote: each neighbor votes for its own utility-best model.

    Vote ties are broken by mean neighbor utility, then by mean neighbor
    cost, then by catalog order.
    """
    idx, _ = index.neighbors(x, k)
    n_models = len(index.catalog)
    votes = np.zeros(n_models, dtype=np.int64)
    for i in idx:
        best = argmax_utility_index(index.scores[i], index.costs[i], lam)
        votes[best] += 1
    top = votes.max()
    tied = np.flatnonzero(votes == top)
    if len(tied) == 1:
        return index.catalog.names[int(tied[0])]
    mean_utility = (index.scores[idx] - lam * index.costs[idx]).mean(axis=0)
    mean_cost = index.costs[idx].mean(axis=0)
    order = np.lexsort((tied, mean_cost[tied], -mean_utility[tied]))
    return index.catalog.names[int(tied[order[0]])]


class KnnRouter(FittedRouter):
    """kNN router; serves both formulations from the same index."""

    arch = "knn"

    def __init__(
        self,
        index: KnnIndex,
        config: RouterConfig,
        formulation: str = "utility",
        meta: dict | None = None,
    ) -> None:
        if formulation not in ("utility", "selection"):
            raise ValueError(f"unknown formulation {formulation!r}")
        super().__init__(
            catalog=index.catalog,
            dim=index.dim,
            config=config,
            meta=meta or {},
        )
        self.index = index
        self.formulation = formulation

    def predict_utility(self, x: np.ndarray) -> UtilityEstimate:
        if self.formulation != "utility":
            return super().predict_utility(x)
        x = self._check_dim(x)
        return knn_predict(
            self.index, x, self.config.k, weighted=self.config.weighted_mean
        )

    def select(self, x: np.ndarray, lam: float) -> str:
        x = self._check_dim(x)
        if self.formulation == "selection":
            return knn_select(self.index, x, self.config.k, lam)
        return super().select(x, lam)

    def _param_arrays(self) -> dict[str, np.ndarray]:
        return {
            "embeddings": self.index.embeddings,
            "scores": self.index.scores,
            "costs": self.index.costs,
        }

    def _extra_payload(self) -> dict:
        return {"ids": list(self.index.ids)}
