"""Closed-form ridge regression router: embeddings to per-model (score, cost).

One weight vector and bias per model and per target, solved jointly from
the normal equations with an L2 penalty on the weights only (the bias is
unregularized, so constant targets are absorbed exactly).
"""

from __future__ import annotations

import numpy as np

from ..core import RoutingDataset, UtilityEstimate
from .base import FittedRouter, RouterConfig


def _solve_ridge(X: np.ndarray, Y: np.ndarray, reg: float) -> np.ndarray:
    """Solve (X1'X1 + reg*D) W = X1'Y with an unregularized bias row.

    X1 is X with a trailing ones column; D zeroes the bias diagonal entry.
    Returns W of shape (dim + 1, n_targets).
    """
    n, d = X.shape
    X1 = np.hstack([X, np.ones((n, 1))])
    gram = X1.T @ X1
    penalty = np.eye(d + 1)
    penalty[d, d] = 0.0
    system = gram + reg * penalty
    # LAPACK happily "solves" rank-deficient but consistent systems, so
    # singularity at reg = 0 is detected by conditioning instead.
    if reg == 0.0 and (
        not np.all(np.isfinite(system)) or np.linalg.cond(system) > 1e12
    ):
        raise ValueError("normal equations are singular; set ridge_reg > 0")
    try:
        return np.linalg.solve(system, X1.T @ Y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "normal equations are singular; set ridge_reg > 0"
        ) from exc


def fit_linear_utility(
    train: RoutingDataset, config: RouterConfig | None = None
) -> "LinearRouter":
    """Fit per-model score and cost regressions in closed form."""
    config = config if config is not None else RouterConfig()
    X = train.embedding_matrix
    S = train.score_matrix
    C = train.cost_matrix
    W = _solve_ridge(X, np.hstack([S, C]), config.ridge_reg)
    n_models = len(train.catalog)
    params = {
        "w_score": W[:-1, :n_models],
        "b_score": W[-1, :n_models],
        "w_cost": W[:-1, n_models:],
        "b_cost": W[-1, n_models:],
    }
    meta = {"c_max": float(C.max()), "n_train": len(train)}
    return LinearRouter(
        catalog=train.catalog,
        dim=train.dim,
        config=config,
        params=params,
        meta=meta,
    )


class LinearRouter(FittedRouter):
    arch = "linear"
    formulation = "utility"

    def __init__(self, catalog, dim, config, params, meta) -> None:
        super().__init__(catalog=catalog, dim=dim, config=config, meta=meta)
        # contiguous copies so fitted and reloaded routers share BLAS paths
        self.params = {
            k: np.ascontiguousarray(v, dtype=np.float64) for k, v in params.items()
        }

    def predict_utility(self, x: np.ndarray) -> UtilityEstimate:
        x = self._check_dim(x)
        scores = x @ self.params["w_score"] + self.params["b_score"]
        costs = x @ self.params["w_cost"] + self.params["b_cost"]
        return UtilityEstimate(models=self.catalog.names, scores=scores, costs=costs)

    def predict_matrix(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        scores = X @ self.params["w_score"] + self.params["b_score"]
        costs = X @ self.params["w_cost"] + self.params["b_cost"]
        return scores, costs

    def _param_arrays(self) -> dict[str, np.ndarray]:
        return self.params
