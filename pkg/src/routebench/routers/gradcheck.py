"""Central finite-difference validation of analytic router gradients."""

from __future__ import annotations

import numpy as np

from ..core import RoutingDataset
from .base import TrainingError
from .nets import SelectionRouter, _GradientRouter, selection_labels

# Absolute errors below this are reported as-is rather than relative, so an
# exact-fit router with ~zero gradients passes vacuously.
ABS_FLOOR = 1e-6
MAX_RETRIES = 5
# Large enough to re-randomize which ReLU units sit near zero between
# retries; fresh-init pre-activations cluster within ~1e-2 of the origin.
JITTER_SCALE = 3e-2


def _as_batch(router: _GradientRouter, sample):
    if isinstance(sample, RoutingDataset):
        X = sample.embedding_matrix
        if isinstance(router, SelectionRouter):
            y = selection_labels(
                sample.score_matrix, sample.cost_matrix, router.trained_lambda
            )
            return (X, y)
        return (X, sample.score_matrix, sample.cost_matrix)
    return tuple(np.asarray(part) for part in sample)


def gradient_check(
    router: _GradientRouter,
    sample_batch,
    h: float = 1e-5,
    n_params: int = 100,
    seed: int = 0,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Checks a seeded random subset of up to ``n_params`` scalar parameters.
    A probe whose +/-h perturbation flips any ReLU unit's sign straddles a
    non-differentiable kink; the whole check is then retried with jittered
    inputs, and a :class:`TrainingError` is raised after ``MAX_RETRIES``
    failed attempts.
    """
    if not isinstance(router, _GradientRouter):
        raise ValueError("gradient_check requires a gradient-trained router")
    batch = _as_batch(router, sample_batch)
    rng = np.random.default_rng(seed)

    names = router._trainable()
    sizes = [router.params[name].size for name in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    chosen = rng.choice(total, size=min(n_params, total), replace=False)
    chosen.sort()

    X = batch[0]
    targets = batch[1:]
    for attempt in range(MAX_RETRIES + 1):
        _, grads = router.loss_and_grads(X, *targets)
        max_err = 0.0
        kinked = False
        for flat_index in chosen:
            which = int(np.searchsorted(offsets, flat_index, side="right") - 1)
            name = names[which]
            local = int(flat_index - offsets[which])
            param = router.params[name]
            original = param.flat[local]
            param.flat[local] = original + h
            loss_plus = router.loss_and_grads(X, *targets)[0]
            sig_plus = router.kink_signature(X)
            param.flat[local] = original - h
            loss_minus = router.loss_and_grads(X, *targets)[0]
            sig_minus = router.kink_signature(X)
            param.flat[local] = original
            if sig_plus != sig_minus:
                kinked = True
                break
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            analytic = float(grads[name].flat[local])
            scale = max(abs(analytic), abs(numeric))
            err = abs(analytic - numeric)
            if scale > ABS_FLOOR:
                err /= scale
            max_err = max(max_err, err)
        if not kinked:
            return max_err
        if attempt == MAX_RETRIES:
            raise TrainingError(
                "ReLU kinks kept falling inside the finite-difference step "
                f"after {MAX_RETRIES} jitter retries"
            )
        X = X + rng.uniform(-JITTER_SCALE, JITTER_SCALE, size=X.shape)
    raise AssertionError("unreachable")
