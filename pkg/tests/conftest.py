"""Shared fixtures: tiny hand-built benchmarks used across the suite."""

import numpy as np
import pytest

from routebench.core import (
    ModelCatalog,
    Outcome,
    Pricing,
    QueryRecord,
    RoutingDataset,
)


def make_catalog(n_models=2, names=None):
    names = names or [chr(ord("A") + i) for i in range(n_models)]
    return ModelCatalog.from_pairs(
        (name, Pricing(1.0 + i, 2.0 + i)) for i, name in enumerate(names)
    )


def make_dataset(embeddings, scores, costs, catalog=None, ids=None, normalize=True):
    """Assemble a dataset from matrices; rows are records, columns models."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    n, n_models = scores.shape
    catalog = catalog or make_catalog(n_models)
    names = catalog.names
    if normalize:
        embeddings = embeddings / np.linalg.norm(embeddings, axis=1, keepdims=True)
    ids = ids or [f"q{i}" for i in range(n)]
    records = tuple(
        QueryRecord(
            id=ids[i],
            embedding=embeddings[i],
            outcomes={
                names[m]: Outcome(score=float(scores[i, m]), cost=float(costs[i, m]))
                for m in range(n_models)
            },
        )
        for i in range(n)
    )
    return RoutingDataset(catalog=catalog, records=records, meta="test fixture")


def random_dataset(rng, n=40, dim=6, n_models=3, catalog=None):
    """Random unit embeddings with smooth-ish scores and positive costs."""
    embeddings = rng.standard_normal((n, dim))
    scores = rng.uniform(0.0, 1.0, size=(n, n_models))
    costs = rng.uniform(0.01, 1.0, size=(n, n_models))
    return make_dataset(embeddings, scores, costs, catalog=catalog)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng, n=40, dim=6, n_models=3)
