"""routebench: routing engine and benchmark harness for multi-model LLM fleets.

Fit utility-prediction and model-selection routers over query embeddings,
evaluate them with the cost-performance Pareto AUC protocol against oracle
and random references, serve routing decisions over HTTP, and probe the
locality structure that makes neighborhood routing work.
"""

from . import analysis, dataio, eval, routers, service
from .core import (
    ModelCatalog,
    Outcome,
    Preference,
    Pricing,
    QueryRecord,
    RoutingDataset,
    UtilityEstimate,
    argmax_utility,
    resolve_preset,
    utility,
)
from .dataio import (
    SplitSpec,
    c_max,
    compute_cost,
    load_catalog,
    load_dataset,
    normalize_embeddings,
    split_dataset,
)
from .routers import (
    RouterConfig,
    fit_knn,
    fit_router,
    load_router,
    save_router,
    select_model,
)

__version__ = "0.1.0"

__all__ = [
    "ModelCatalog",
    "Outcome",
    "Preference",
    "Pricing",
    "QueryRecord",
    "RouterConfig",
    "RoutingDataset",
    "SplitSpec",
    "UtilityEstimate",
    "analysis",
    "argmax_utility",
    "c_max",
    "compute_cost",
    "dataio",
    "eval",
    "fit_knn",
    "fit_router",
    "load_catalog",
    "load_dataset",
    "load_router",
    "normalize_embeddings",
    "resolve_preset",
    "routers",
    "save_router",
    "select_model",
    "service",
    "split_dataset",
    "utility",
]
