"""Router architectures and their training procedures."""

from .base import (
    ARCHITECTURES,
    ContractError,
    FittedRouter,
    RouterConfig,
    TrainingError,
    load_router,
    predict_utility,
    router_version,
    save_router,
    select_model,
)
from .gradcheck import gradient_check
from .knn import KnnIndex, KnnRouter, fit_knn, knn_predict, knn_select
from .linear import LinearRouter, fit_linear_utility
from .nets import (
    LinearMFRouter,
    MLPMFRouter,
    MLPRouter,
    SelectionRouter,
    fit_linear_mf,
    fit_mlp_mf,
    fit_mlp_utility,
    fit_selection,
    selection_labels,
)

from ..core import RoutingDataset


def fit_router(
    train: RoutingDataset,
    arch: str,
    formulation: str = "utility",
    config: RouterConfig | None = None,
    lam: float | None = None,
    val: RoutingDataset | None = None,
    c_max: float | None = None,
) -> FittedRouter:
    """Fit any architecture/formulation pair through one entry point.

    ``c_max`` overrides the baked-in preset normalizer (use the full
    benchmark's maximum cost rather than the train split's when known).
    """
    if arch not in ARCHITECTURES:
        raise ValueError(
            f"unknown architecture {arch!r}; valid: {', '.join(ARCHITECTURES)}"
        )
    config = config if config is not None else RouterConfig()
    if formulation == "utility":
        if arch == "knn":
            router = fit_knn(train, config)
        elif arch == "linear":
            router = fit_linear_utility(train, config)
        elif arch == "linear_mf":
            router = fit_linear_mf(train, config, val=val)
        elif arch == "mlp":
            router = fit_mlp_utility(train, config, val=val)
        else:
            router = fit_mlp_mf(train, config, val=val)
    elif formulation == "selection":
        if arch == "knn":
            knn = fit_knn(train, config)
            router = KnnRouter(
                index=knn.index, config=config, formulation="selection", meta=knn.meta
            )
        else:
            if lam is None:
                raise ValueError("selection routers need the training lam")
            router = fit_selection(train, lam, arch, config, val=val)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    if c_max is not None:
        router.meta["c_max"] = float(c_max)
    return router


__all__ = [
    "ARCHITECTURES",
    "ContractError",
    "FittedRouter",
    "KnnIndex",
    "KnnRouter",
    "LinearMFRouter",
    "LinearRouter",
    "MLPMFRouter",
    "MLPRouter",
    "RouterConfig",
    "SelectionRouter",
    "TrainingError",
    "fit_knn",
    "fit_linear_mf",
    "fit_linear_utility",
    "fit_mlp_mf",
    "fit_mlp_utility",
    "fit_router",
    "fit_selection",
    "gradient_check",
    "knn_predict",
    "knn_select",
    "load_router",
    "predict_utility",
    "router_version",
    "save_router",
    "select_model",
    "selection_labels",
]
