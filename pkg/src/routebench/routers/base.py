"""Router base class, shared configuration, serialization, and dispatch."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..core import (
    ModelCatalog,
    Preference,
    Pricing,
    UtilityEstimate,
    argmax_utility,
)

ARCHITECTURES = ("knn", "linear", "linear_mf", "mlp", "mlp_mf")
FORMULATIONS = ("utility", "selection")

SERIALIZATION_VERSION = 1


class ContractError(RuntimeError):
    """A router was used outside the contract it was trained for."""


class TrainingError(RuntimeError):
    """Training failed (divergence, or an unusable gradient check point)."""


@dataclass(frozen=True)
class RouterConfig:
    """Hyperparameters shared by all router architectures.

    ``hidden_layers`` counts fully-connected layers in the MLP family (the
    default 3 means input -> 100 -> 100 -> output). ``alpha`` weighs the
    cost-prediction term of the utility training loss. ``k`` is clamped to
    the index size at query time rather than erroring.
    """

    k: int = 10
    ridge_reg: float = 1e-3
    hidden_width: int = 100
    hidden_layers: int = 3
    model_embed_dim: int = 128
    alpha: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    early_stop_patience: int = 10
    auto_normalize: bool = False
    weighted_mean: bool = False
    standardize_targets: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.ridge_reg < 0:
            raise ValueError("ridge_reg must be >= 0")
        if self.hidden_width < 1 or self.hidden_layers < 2:
            raise ValueError("hidden_width must be >= 1 and hidden_layers >= 2")
        if self.model_embed_dim < 1:
            raise ValueError("model_embed_dim must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ValueError("epochs, batch_size, early_stop_patience must be >= 1")


class FittedRouter:
    """A trained router: an architecture tag, a formulation, and parameters.

    Subclasses implement ``predict_utility`` (utility formulation) and/or
    ``select``; both are read-only after fitting and safe to call from any
    number of threads.
    """

    arch: str
    formulation: str

    def __init__(
        self,
        catalog: ModelCatalog,
        dim: int,
        config: RouterConfig,
        meta: dict,
    ) -> None:
        self.catalog = catalog
        self.dim = int(dim)
        self.config = config
        self.meta = dict(meta)

    # -- queries ---------------------------------------------------------

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise ValueError(
                f"query embedding has shape {x.shape}, router expects ({self.dim},)"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("query embedding entries must be finite")
        return x

    def predict_utility(self, x: np.ndarray) -> UtilityEstimate:
        raise ContractError(
            f"{self.arch} router with formulation {self.formulation!r} "
            "does not predict utilities"
        )

    def select(self, x: np.ndarray, lam: float) -> str:
        estimate = self.predict_utility(x)
        return argmax_utility(estimate, lam)

    def resolve_preference(self, preference) -> float:
        """Resolve a lam value, preset name, or Preference to a float lam."""
        if isinstance(preference, str):
            preference = Preference(preset=preference)
        if isinstance(preference, Preference):
            if preference.lam is not None:
                return preference.lam
            c_max = self.meta.get("c_max")
            if c_max is None or not c_max > 0:
                raise ContractError(
                    "router has no baked c_max; resolve the preset explicitly"
                )
            return preference.resolve(c_max)
        lam = float(preference)
        if lam < 0 or not np.isfinite(lam):
            raise ValueError(f"lam must be finite and >= 0, got {lam}")
        return lam

    # -- serialization ----------------------------------------------------

    def _param_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _extra_payload(self) -> dict:
        return {}

    def to_payload(self) -> dict:
        params = {
            name: {"shape": list(arr.shape), "data": np.asarray(arr).ravel().tolist()}
            for name, arr in self._param_arrays().items()
        }
        return {
            "format_version": SERIALIZATION_VERSION,
            "arch": self.arch,
            "formulation": self.formulation,
            "dim": self.dim,
            "config": asdict(self.config),
            "catalog": [
                {
                    "name": name,
                    "input_price": pricing.input_price,
                    "output_price": pricing.output_price,
                }
                for name, pricing in self.catalog
            ],
            "meta": self.meta,
            "params": params,
            "extra": self._extra_payload(),
        }


def predict_utility(router: FittedRouter, x: np.ndarray) -> UtilityEstimate:
    """Architecture-appropriate forward pass producing per-model (s, c)."""
    return router.predict_utility(x)


def select_model(router: FittedRouter, x: np.ndarray, preference) -> str:
    """Route one query: utility routers argmax predicted utility at lam,
    selection routers return their classifier argmax (their training lam
    must match the requested one)."""
    lam = router.resolve_preference(preference)
    return router.select(x, lam)


def save_router(router: FittedRouter, path) -> str:
    """Serialize a router to a versioned JSON file; returns its content hash.

    Floats survive the JSON round-trip exactly, so a loaded router
    reproduces predictions bit-identically.
    """
    payload = router.to_payload()
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def router_version(path) -> str:
    """Content hash (sha256) of a serialized router file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _decode_params(raw: dict) -> dict[str, np.ndarray]:
    params = {}
    for name, entry in raw.items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = arr
    return params


def load_router(path) -> FittedRouter:
    """Rebuild a router from :func:`save_router` output."""
    from .knn import KnnIndex, KnnRouter
    from .linear import LinearRouter
    from .nets import LinearMFRouter, MLPMFRouter, MLPRouter, SelectionRouter

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != SERIALIZATION_VERSION:
        raise ValueError(f"unsupported router format version {version!r}")
    catalog = ModelCatalog(
        entries=tuple(
            (item["name"], Pricing(item["input_price"], item["output_price"]))
            for item in payload["catalog"]
        )
    )
    config = RouterConfig(**payload["config"])
    params = _decode_params(payload["params"])
    arch = payload["arch"]
    formulation = payload["formulation"]
    meta = payload["meta"]
    dim = payload["dim"]
    extra = payload.get("extra", {})

    if arch == "knn":
        index = KnnIndex(
            catalog=catalog,
            ids=tuple(extra["ids"]),
            embeddings=params["embeddings"],
            scores=params["scores"],
            costs=params["costs"],
        )
        return KnnRouter(
            index=index, config=config, formulation=formulation, meta=meta
        )
    if formulation == "selection":
        return SelectionRouter(
            arch=arch,
            catalog=catalog,
            dim=dim,
            config=config,
            params=params,
            meta=meta,
        )
    if arch == "linear":
        return LinearRouter(
            catalog=catalog, dim=dim, config=config, params=params, meta=meta
        )
    if arch == "linear_mf":
        return LinearMFRouter(
            catalog=catalog, dim=dim, config=config, params=params, meta=meta
        )
    if arch == "mlp":
        return MLPRouter(
            catalog=catalog, dim=dim, config=config, params=params, meta=meta
        )
    if arch == "mlp_mf":
        return MLPMFRouter(
            catalog=catalog, dim=dim, config=config, params=params, meta=meta
        )
    raise ValueError(f"unknown architecture {arch!r}")
