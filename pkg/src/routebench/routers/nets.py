"""Gradient-trained routers: linear-MF, MLP, MLP-MF, and selection heads.

Everything here is plain numpy with hand-derived backprop. Training is
mini-batch SGD with a fixed learning rate; all randomness (initialization
and batch order) flows from one seeded generator, so identical
(data, config, seed) triples produce bit-identical routers.

Initialization: weights and model embeddings uniform in [-0.05, 0.05],
biases zero.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import (
    ModelCatalog,
    RoutingDataset,
    UtilityEstimate,
    argmax_utility_index,
)
from .base import ContractError, FittedRouter, RouterConfig, TrainingError

INIT_SCALE = 0.05


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _layer_sizes(in_dim: int, out_dim: int, config: RouterConfig) -> list[int]:
    # hidden_layers counts fully-connected layers; the default 3 gives
    # in -> width -> width -> out.
    return [in_dim] + [config.hidden_width] * (config.hidden_layers - 1) + [out_dim]


def _init_mlp(rng, params: dict, prefix: str, sizes: list[int]) -> None:
    for i in range(len(sizes) - 1):
        params[f"{prefix}w{i + 1}"] = rng.uniform(
            -INIT_SCALE, INIT_SCALE, size=(sizes[i], sizes[i + 1])
        )
        params[f"{prefix}b{i + 1}"] = np.zeros(sizes[i + 1])


def _mlp_forward(params: dict, prefix: str, X: np.ndarray):
    """Forward pass; returns (output, caches) for the matching backward."""
    caches = []
    act = X
    i = 1
    while f"{prefix}w{i}" in params:
        z = act @ params[f"{prefix}w{i}"] + params[f"{prefix}b{i}"]
        last = f"{prefix}w{i + 1}" not in params
        caches.append((act, z))
        act = z if last else _relu(z)
        i += 1
    return act, caches


def _mlp_backward(params: dict, prefix: str, caches, d_out: np.ndarray):
    """Backprop through the stack; returns (grads, d_input)."""
    grads: dict[str, np.ndarray] = {}
    n_layers = len(caches)
    delta = d_out
    for i in range(n_layers, 0, -1):
        act_in, z = caches[i - 1]
        if i != n_layers:
            delta = delta * (z > 0)
        grads[f"{prefix}w{i}"] = act_in.T @ delta
        grads[f"{prefix}b{i}"] = delta.sum(axis=0)
        delta = delta @ params[f"{prefix}w{i}"].T
    return grads, delta


def _mlp_signature(params: dict, prefix: str, X: np.ndarray) -> bytes:
    """ReLU active-set fingerprint; changes exactly when a unit flips sign."""
    act = X
    masks = []
    i = 1
    while f"{prefix}w{i}" in params:
        z = act @ params[f"{prefix}w{i}"] + params[f"{prefix}b{i}"]
        last = f"{prefix}w{i + 1}" not in params
        if not last:
            masks.append((z > 0).tobytes())
        act = z if last else _relu(z)
        i += 1
    return b"".join(masks)


def _column_stats(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = Y.mean(axis=0)
    scale = Y.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return shift, scale


class _GradientRouter(FittedRouter):
    """Shared machinery for routers trained by SGD."""

    has_relu = False
    formulation = "utility"

    def __init__(self, catalog, dim, config, params, meta) -> None:
        super().__init__(catalog=catalog, dim=dim, config=config, meta=meta)
        self.params = {
            k: np.ascontiguousarray(v, dtype=np.float64) for k, v in params.items()
        }

    # utility routers implement _forward; selection overrides loss paths
    def _forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
        raise NotImplementedError

    def predict_matrix(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s_raw, c_raw, _ = self._forward(X)
        scores = s_raw * self.params["score_scale"] + self.params["score_shift"]
        costs = c_raw * self.params["cost_scale"] + self.params["cost_shift"]
        return scores, costs

    def predict_utility(self, x: np.ndarray) -> UtilityEstimate:
        x = self._check_dim(x)
        scores, costs = self.predict_matrix(x[None, :])
        return UtilityEstimate(
            models=self.catalog.names, scores=scores[0], costs=costs[0]
        )

    def loss_and_grads(self, X, S, C):
        """Mean-squared utility loss and parameter gradients on a batch.

        The loss is MSE on standardized score targets plus alpha times MSE
        on standardized cost targets (standardization is the identity unless
        the router was fitted with standardize_targets).
        """
        s_t = (S - self.params["score_shift"]) / self.params["score_scale"]
        c_t = (C - self.params["cost_shift"]) / self.params["cost_scale"]
        s_raw, c_raw, cache = self._forward(X)
        n_cells = s_raw.size
        alpha = self.config.alpha
        loss = float(np.mean((s_raw - s_t) ** 2) + alpha * np.mean((c_raw - c_t) ** 2))
        g_s = 2.0 * (s_raw - s_t) / n_cells
        g_c = alpha * 2.0 * (c_raw - c_t) / n_cells
        grads = self._backward(X, g_s, g_c, cache)
        for name in ("score_shift", "score_scale", "cost_shift", "cost_scale"):
            grads[name] = np.zeros_like(self.params[name])
        return loss, grads

    def loss(self, X, S, C) -> float:
        return self.loss_and_grads(X, S, C)[0]

    def kink_signature(self, X) -> bytes:
        """ReLU active-set fingerprint; empty for kink-free architectures."""
        return b""

    def _param_arrays(self) -> dict[str, np.ndarray]:
        return self.params

    def _trainable(self) -> tuple[str, ...]:
        frozen = {"score_shift", "score_scale", "cost_shift", "cost_scale"}
        return tuple(k for k in self.params if k not in frozen)


def _attach_target_transforms(params: dict, S, C, enabled: bool) -> None:
    n_models = S.shape[1]
    if enabled:
        params["score_shift"], params["score_scale"] = _column_stats(S)
        params["cost_shift"], params["cost_scale"] = _column_stats(C)
    else:
        params["score_shift"] = np.zeros(n_models)
        params["score_scale"] = np.ones(n_models)
        params["cost_shift"] = np.zeros(n_models)
        params["cost_scale"] = np.ones(n_models)


def _sgd(router, batches, config: RouterConfig, rng, val_batches=None):
    """Mini-batch SGD with optional early stopping on validation loss.

    ``batches``/``val_batches`` are (X, *targets) tuples of full splits;
    shuffling happens here so batch order derives from the seed alone.
    """
    X = batches[0]
    targets = batches[1:]
    n = X.shape[0]
    initial = router.loss_and_grads(X, *targets)[0]
    history: list[list] = []
    best_val = math.inf
    best_params = None
    since_best = 0
    epochs_run = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        # divergence surfaces as a non-finite epoch loss, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                sel = order[start : start + config.batch_size]
                _, grads = router.loss_and_grads(X[sel], *(t[sel] for t in targets))
                for name in router._trainable():
                    router.params[name] -= config.learning_rate * grads[name]
            train_loss = router.loss_and_grads(X, *targets)[0]
        if not math.isfinite(train_loss):
            raise TrainingError(f"training diverged at epoch {epoch + 1}")
        val_loss = None
        if val_batches is not None:
            val_loss = router.loss_and_grads(*val_batches)[0]
            if not math.isfinite(val_loss):
                raise TrainingError(f"validation loss non-finite at epoch {epoch + 1}")
        history.append([train_loss, val_loss])
        epochs_run = epoch + 1
        if val_batches is not None:
            if val_loss < best_val:
                best_val = val_loss
                best_params = {k: v.copy() for k, v in router.params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    break
    if best_params is not None:
        router.params = best_params
    final = router.loss_and_grads(X, *targets)[0]
    router.meta.update(
        {
            "initial_train_loss": initial,
            "final_train_loss": final,
            "final_val_loss": best_val if best_params is not None else None,
            "epochs_run": epochs_run,
            "loss_history": history,
        }
    )
    return router


# ---------------------------------------------------------------------------
# Linear matrix-factorization router


class LinearMFRouter(_GradientRouter):
    """Bilinear router: score = x' W_s emb(m) + b_s, likewise for cost.

    The model embedding table is shared between the score and cost paths.
    """

    arch = "linear_mf"

    def _forward(self, X):
        emb = self.params["emb"]
        p_s = X @ self.params["w_score"]
        p_c = X @ self.params["w_cost"]
        s_raw = p_s @ emb.T + self.params["b_score"]
        c_raw = p_c @ emb.T + self.params["b_cost"]
        return s_raw, c_raw, {"p_s": p_s, "p_c": p_c}

    def _backward(self, X, g_s, g_c, cache):
        emb = self.params["emb"]
        grads = {
            "b_score": np.array(g_s.sum()),
            "b_cost": np.array(g_c.sum()),
            "w_score": X.T @ (g_s @ emb),
            "w_cost": X.T @ (g_c @ emb),
            "emb": g_s.T @ cache["p_s"] + g_c.T @ cache["p_c"],
        }
        return grads


def fit_linear_mf(
    train: RoutingDataset,
    config: RouterConfig | None = None,
    val: RoutingDataset | None = None,
) -> LinearMFRouter:
    config = config if config is not None else RouterConfig()
    rng = np.random.default_rng(config.seed)
    X, S, C = train.embedding_matrix, train.score_matrix, train.cost_matrix
    n_models = len(train.catalog)
    params: dict[str, np.ndarray] = {
        "emb": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_models, config.model_embed_dim)),
        "w_score": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(train.dim, config.model_embed_dim)),
        "w_cost": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(train.dim, config.model_embed_dim)),
        "b_score": np.array(0.0),
        "b_cost": np.array(0.0),
    }
    _attach_target_transforms(params, S, C, config.standardize_targets)
    router = LinearMFRouter(
        catalog=train.catalog,
        dim=train.dim,
        config=config,
        params=params,
        meta={"c_max": float(C.max()), "n_train": len(train)},
    )
    val_batches = (
        (val.embedding_matrix, val.score_matrix, val.cost_matrix)
        if val is not None
        else None
    )
    return _sgd(router, (X, S, C), config, rng, val_batches)


# ---------------------------------------------------------------------------
# MLP router (separate per-model-output networks for score and cost)


class MLPRouter(_GradientRouter):
    """Two ReLU MLPs over the query embedding, one output per model each."""

    arch = "mlp"
    has_relu = True

    def _forward(self, X):
        s_raw, s_cache = _mlp_forward(self.params, "s_", X)
        c_raw, c_cache = _mlp_forward(self.params, "c_", X)
        return s_raw, c_raw, {"s": s_cache, "c": c_cache}

    def _backward(self, X, g_s, g_c, cache):
        grads_s, _ = _mlp_backward(self.params, "s_", cache["s"], g_s)
        grads_c, _ = _mlp_backward(self.params, "c_", cache["c"], g_c)
        grads_s.update(grads_c)
        return grads_s

    def kink_signature(self, X) -> bytes:
        return _mlp_signature(self.params, "s_", X) + _mlp_signature(
            self.params, "c_", X
        )


def fit_mlp_utility(
    train: RoutingDataset,
    config: RouterConfig | None = None,
    val: RoutingDataset | None = None,
) -> MLPRouter:
    config = config if config is not None else RouterConfig()
    rng = np.random.default_rng(config.seed)
    X, S, C = train.embedding_matrix, train.score_matrix, train.cost_matrix
    sizes = _layer_sizes(train.dim, len(train.catalog), config)
    params: dict[str, np.ndarray] = {}
    _init_mlp(rng, params, "s_", sizes)
    _init_mlp(rng, params, "c_", sizes)
    _attach_target_transforms(params, S, C, config.standardize_targets)
    router = MLPRouter(
        catalog=train.catalog,
        dim=train.dim,
        config=config,
        params=params,
        meta={"c_max": float(C.max()), "n_train": len(train)},
    )
    val_batches = (
        (val.embedding_matrix, val.score_matrix, val.cost_matrix)
        if val is not None
        else None
    )
    return _sgd(router, (X, S, C), config, rng, val_batches)


# ---------------------------------------------------------------------------
# MLP matrix-factorization router


class MLPMFRouter(_GradientRouter):
    """Shared MLPs over [emb(query); emb(model)] with a learned model table."""

    arch = "mlp_mf"
    has_relu = True

    def _concat(self, X):
        n = X.shape[0]
        emb = self.params["emb"]
        n_models = emb.shape[0]
        x_rep = np.repeat(X, n_models, axis=0)
        e_rep = np.tile(emb, (n, 1))
        return np.hstack([x_rep, e_rep])

    def _forward(self, X):
        n = X.shape[0]
        n_models = self.params["emb"].shape[0]
        x_cat = self._concat(X)
        s_flat, s_cache = _mlp_forward(self.params, "s_", x_cat)
        c_flat, c_cache = _mlp_forward(self.params, "c_", x_cat)
        s_raw = s_flat.reshape(n, n_models)
        c_raw = c_flat.reshape(n, n_models)
        return s_raw, c_raw, {"s": s_cache, "c": c_cache, "n": n}

    def _backward(self, X, g_s, g_c, cache):
        n = cache["n"]
        n_models, d_m = self.params["emb"].shape
        grads_s, d_in_s = _mlp_backward(
            self.params, "s_", cache["s"], g_s.reshape(-1, 1)
        )
        grads_c, d_in_c = _mlp_backward(
            self.params, "c_", cache["c"], g_c.reshape(-1, 1)
        )
        grads_s.update(grads_c)
        d_emb = (d_in_s[:, X.shape[1] :] + d_in_c[:, X.shape[1] :]).reshape(
            n, n_models, d_m
        )
        grads_s["emb"] = d_emb.sum(axis=0)
        return grads_s

    def kink_signature(self, X) -> bytes:
        x_cat = self._concat(X)
        return _mlp_signature(self.params, "s_", x_cat) + _mlp_signature(
            self.params, "c_", x_cat
        )


def fit_mlp_mf(
    train: RoutingDataset,
    config: RouterConfig | None = None,
    val: RoutingDataset | None = None,
) -> MLPMFRouter:
    config = config if config is not None else RouterConfig()
    rng = np.random.default_rng(config.seed)
    X, S, C = train.embedding_matrix, train.score_matrix, train.cost_matrix
    n_models = len(train.catalog)
    sizes = _layer_sizes(train.dim + config.model_embed_dim, 1, config)
    params: dict[str, np.ndarray] = {
        "emb": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_models, config.model_embed_dim))
    }
    _init_mlp(rng, params, "s_", sizes)
    _init_mlp(rng, params, "c_", sizes)
    _attach_target_transforms(params, S, C, config.standardize_targets)
    router = MLPMFRouter(
        catalog=train.catalog,
        dim=train.dim,
        config=config,
        params=params,
        meta={"c_max": float(C.max()), "n_train": len(train)},
    )
    val_batches = (
        (val.embedding_matrix, val.score_matrix, val.cost_matrix)
        if val is not None
        else None
    )
    return _sgd(router, (X, S, C), config, rng, val_batches)


# ---------------------------------------------------------------------------
# Selection routers (softmax classifiers over models)


def selection_labels(S: np.ndarray, C: np.ndarray, lam: float) -> np.ndarray:
    """One label per row: the utility-best model under the core tie-break."""
    n = S.shape[0]
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = argmax_utility_index(S[i], C[i], lam)
    return labels


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class SelectionRouter(_GradientRouter):
    """Softmax classifier mapping a query straight to a model.

    Trained for one fixed trade-off lam (recorded in meta); querying it at
    a different lam is a contract violation. Equal logits fall back to
    catalog order.
    """

    formulation = "selection"

    def __init__(self, arch, catalog, dim, config, params, meta) -> None:
        if arch not in ("linear", "mlp", "linear_mf", "mlp_mf"):
            raise ValueError(f"unsupported selection architecture {arch!r}")
        self.arch = arch
        self.has_relu = arch in ("mlp", "mlp_mf")
        super().__init__(
            catalog=catalog, dim=dim, config=config, params=params, meta=meta
        )

    @property
    def trained_lambda(self) -> float:
        return float(self.meta["trained_lambda"])

    def predict_utility(self, x):
        return FittedRouter.predict_utility(self, x)

    def _concat(self, X):
        n = X.shape[0]
        emb = self.params["emb"]
        return np.hstack([np.repeat(X, emb.shape[0], axis=0), np.tile(emb, (n, 1))])

    def logits_matrix(self, X: np.ndarray):
        if self.arch == "linear":
            return X @ self.params["w"] + self.params["b"], None
        if self.arch == "mlp":
            logits, cache = _mlp_forward(self.params, "s_", X)
            return logits, cache
        if self.arch == "linear_mf":
            p = X @ self.params["w"]
            return p @ self.params["emb"].T + self.params["b"], {"p": p}
        logits_flat, cache = _mlp_forward(self.params, "s_", self._concat(X))
        return logits_flat.reshape(X.shape[0], -1), cache

    def loss_and_grads(self, X, y):
        """Cross-entropy loss over model labels and parameter gradients."""
        logits, cache = self.logits_matrix(X)
        probs = _softmax(logits)
        n = X.shape[0]
        eps = 1e-300  # guards log(0) for saturated classifiers
        loss = float(-np.log(probs[np.arange(n), y] + eps).mean())
        d_logits = probs.copy()
        d_logits[np.arange(n), y] -= 1.0
        d_logits /= n
        if self.arch == "linear":
            grads = {"w": X.T @ d_logits, "b": d_logits.sum(axis=0)}
        elif self.arch == "mlp":
            grads, _ = _mlp_backward(self.params, "s_", cache, d_logits)
        elif self.arch == "linear_mf":
            emb = self.params["emb"]
            grads = {
                "w": X.T @ (d_logits @ emb),
                "b": d_logits.sum(axis=0),
                "emb": d_logits.T @ cache["p"],
            }
        else:
            n_models, d_m = self.params["emb"].shape
            grads, d_in = _mlp_backward(
                self.params, "s_", cache, d_logits.reshape(-1, 1)
            )
            grads["emb"] = (
                d_in[:, X.shape[1] :].reshape(n, n_models, d_m).sum(axis=0)
            )
        return loss, grads

    def loss(self, X, y) -> float:
        return self.loss_and_grads(X, y)[0]

    def _trainable(self) -> tuple[str, ...]:
        return tuple(self.params)

    def select(self, x: np.ndarray, lam: float) -> str:
        x = self._check_dim(x)
        if not math.isclose(lam, self.trained_lambda, rel_tol=1e-12, abs_tol=1e-15):
            raise ContractError(
                f"selection router was trained for lam={self.trained_lambda!r}, "
                f"queried at lam={lam!r}"
            )
        logits, _ = self.logits_matrix(x[None, :])
        return self.catalog.names[int(np.argmax(logits[0]))]

    def kink_signature(self, X) -> bytes:
        if self.arch == "mlp":
            return _mlp_signature(self.params, "s_", X)
        if self.arch == "mlp_mf":
            return _mlp_signature(self.params, "s_", self._concat(X))
        return b""

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        logits, _ = self.logits_matrix(X)
        return float((logits.argmax(axis=1) == y).mean())


def fit_selection(
    train: RoutingDataset,
    lam: float,
    arch: str,
    config: RouterConfig | None = None,
    val: RoutingDataset | None = None,
) -> SelectionRouter:
    """Train a softmax model-selection classifier for one fixed lam.

    Labels are the per-query utility-best model under the core tie-break.
    """
    if not (np.isfinite(lam) and lam >= 0):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    config = config if config is not None else RouterConfig()
    rng = np.random.default_rng(config.seed)
    X, S, C = train.embedding_matrix, train.score_matrix, train.cost_matrix
    y = selection_labels(S, C, lam)
    n_models = len(train.catalog)
    params: dict[str, np.ndarray] = {}
    if arch == "linear":
        params["w"] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(train.dim, n_models))
        params["b"] = np.zeros(n_models)
    elif arch == "mlp":
        _init_mlp(rng, params, "s_", _layer_sizes(train.dim, n_models, config))
    elif arch == "linear_mf":
        params["emb"] = rng.uniform(
            -INIT_SCALE, INIT_SCALE, size=(n_models, config.model_embed_dim)
        )
        params["w"] = rng.uniform(
            -INIT_SCALE, INIT_SCALE, size=(train.dim, config.model_embed_dim)
        )
        params["b"] = np.zeros(n_models)
    elif arch == "mlp_mf":
        params["emb"] = rng.uniform(
            -INIT_SCALE, INIT_SCALE, size=(n_models, config.model_embed_dim)
        )
        _init_mlp(
            rng,
            params,
            "s_",
            _layer_sizes(train.dim + config.model_embed_dim, 1, config),
        )
    else:
        raise ValueError(
            f"unsupported selection architecture {arch!r}; "
            "valid: linear, mlp, linear_mf, mlp_mf"
        )
    router = SelectionRouter(
        arch=arch,
        catalog=train.catalog,
        dim=train.dim,
        config=config,
        params=params,
        meta={
            "c_max": float(C.max()),
            "n_train": len(train),
            "trained_lambda": float(lam),
        },
    )
    val_batches = None
    if val is not None:
        val_batches = (
            val.embedding_matrix,
            selection_labels(val.score_matrix, val.cost_matrix, lam),
        )
    return _sgd(router, (X, y), config, rng, val_batches)
