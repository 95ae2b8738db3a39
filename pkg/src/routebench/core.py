"""Domain types and the utility algebra shared by every other module.

A routing problem is a catalog of candidate models with per-token pricing,
plus a set of queries for which the score and cost of every model is known.
The single scalar every router optimizes is ``score - lam * cost``; the
helpers here keep that arithmetic, its tie-breaking rules, and the named
preference presets in one place.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterator, Mapping

import numpy as np

# Named cost/performance preferences, resolved as lam = weight / c_max where
# c_max is the maximum per-query cost observed in a benchmark.
PRESET_WEIGHTS: Mapping[str, float] = MappingProxyType(
    {"low_cost": 1.0, "balanced": 0.5, "high_performance": 0.1}
)

PRESET_ORDER = ("low_cost", "balanced", "high_performance")


def _require_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Pricing:
    """Per-model API pricing in USD per one million tokens."""

    input_price: float
    output_price: float

    def __post_init__(self) -> None:
        for name in ("input_price", "output_price"):
            value = _require_finite(getattr(self, name), name)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class ModelCatalog:
    """Ordered list of (model name, pricing) pairs.

    The order in which models appear is the deterministic tie-break order
    used everywhere downstream, so it must be stable. Names are compared by
    exact equality and must be unique. A catalog with a single model is
    allowed (routing is then trivial); two or more models are needed for
    routing to be meaningful.
    """

    entries: tuple[tuple[str, Pricing], ...]

    def __post_init__(self) -> None:
        entries = tuple((str(name), pricing) for name, pricing in self.entries)
        if not entries:
            raise ValueError("catalog must contain at least one model")
        names = [name for name, _ in entries]
        if any(not name for name in names):
            raise ValueError("model names must be nonempty")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate model names in catalog: {dupes}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_pairs(cls, pairs) -> "ModelCatalog":
        return cls(entries=tuple((name, pricing) for name, pricing in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def pricing(self, name: str) -> Pricing:
        for entry_name, pricing in self.entries:
            if entry_name == name:
                return pricing
        raise KeyError(f"model {name!r} not in catalog")

    def index(self, name: str) -> int:
        for i, (entry_name, _) in enumerate(self.entries):
            if entry_name == name:
                return i
        raise KeyError(f"model {name!r} not in catalog")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, Pricing]]:
        return iter(self.entries)

    def __contains__(self, name: str) -> bool:
        return any(entry_name == name for entry_name, _ in self.entries)


@dataclass(frozen=True)
class Outcome:
    """Observed result of running one model on one query.

    ``score`` is in the benchmark's native units (higher is better);
    ``cost`` is USD. Token counts are optional; when present, the stored
    cost must match the pricing formula (checked at dataset construction,
    where the catalog's pricing is available).
    """

    score: float
    cost: float
    input_tokens: int | None = None
    output_tokens: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", _require_finite(self.score, "score"))
        cost = _require_finite(self.cost, "cost")
        if cost < 0:
            raise ValueError(f"cost must be >= 0, got {cost}")
        object.__setattr__(self, "cost", cost)
        for name in ("input_tokens", "output_tokens"):
            tokens = getattr(self, name)
            if tokens is None:
                continue
            tokens = int(tokens)
            if tokens < 0:
                raise ValueError(f"{name} must be >= 0, got {tokens}")
            object.__setattr__(self, name, tokens)

    @property
    def has_tokens(self) -> bool:
        return self.input_tokens is not None and self.output_tokens is not None


def _as_embedding(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("embedding must be a nonempty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding entries must all be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class QueryRecord:
    """One query: unique id, embedding, and the outcome of every model."""

    id: str
    embedding: np.ndarray
    outcomes: Mapping[str, Outcome]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be nonempty")
        object.__setattr__(self, "embedding", _as_embedding(self.embedding))
        object.__setattr__(self, "outcomes", MappingProxyType(dict(self.outcomes)))

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])


# Tolerance for "cost equals the token-pricing formula" checks.
COST_CONSISTENCY_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class RoutingDataset:
    """A complete benchmark: catalog plus a full (query x model) outcome matrix.

    Invariants enforced here: at least one record, one shared embedding
    dimension, unique record ids, and outcomes covering exactly the catalog's
    model set for every record (no missing cells). When a record carries
    token counts, its stored cost must agree with the catalog pricing.
    """

    catalog: ModelCatalog
    records: tuple[QueryRecord, ...]
    meta: str = ""

    def __post_init__(self) -> None:
        records = tuple(self.records)
        if not records:
            raise ValueError("dataset must contain at least one record")
        object.__setattr__(self, "records", records)

        dim = records[0].dim
        names = self.catalog.names
        name_set = set(names)
        seen_ids: set[str] = set()
        for record in records:
            if record.id in seen_ids:
                raise ValueError(f"duplicate record id {record.id!r}")
            seen_ids.add(record.id)
            if record.dim != dim:
                raise ValueError(
                    f"record {record.id!r} has dim {record.dim}, expected {dim}"
                )
            for name in names:
                if name not in record.outcomes:
                    raise ValueError(
                        f"record {record.id} missing outcome for {name}"
                    )
            extra = set(record.outcomes) - name_set
            if extra:
                raise ValueError(
                    f"record {record.id!r} has outcomes for unknown models {sorted(extra)}"
                )
            for name in names:
                outcome = record.outcomes[name]
                if outcome.has_tokens:
                    pricing = self.catalog.pricing(name)
                    expected = (
                        outcome.input_tokens * pricing.input_price
                        + outcome.output_tokens * pricing.output_price
                    ) / 1e6
                    if abs(outcome.cost - expected) > COST_CONSISTENCY_ATOL:
                        raise ValueError(
                            f"record {record.id!r} model {name!r}: stored cost "
                            f"{outcome.cost} disagrees with token pricing {expected}"
                        )

    @property
    def dim(self) -> int:
        return self.records[0].dim

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(record.id for record in self.records)

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def embedding_matrix(self) -> np.ndarray:
        """(n, dim) float64 matrix of record embeddings, read-only."""
        mat = np.stack([record.embedding for record in self.records])
        mat.flags.writeable = False
        return mat

    @cached_property
    def score_matrix(self) -> np.ndarray:
        """(n, n_models) matrix of scores in catalog column order."""
        names = self.catalog.names
        mat = np.array(
            [[record.outcomes[m].score for m in names] for record in self.records],
            dtype=np.float64,
        )
        mat.flags.writeable = False
        return mat

    @cached_property
    def cost_matrix(self) -> np.ndarray:
        """(n, n_models) matrix of costs in catalog column order."""
        names = self.catalog.names
        mat = np.array(
            [[record.outcomes[m].cost for m in names] for record in self.records],
            dtype=np.float64,
        )
        mat.flags.writeable = False
        return mat

    def subset(self, indices) -> "RoutingDataset":
        """New dataset restricted to the given record positions (order kept)."""
        indices = list(indices)
        if not indices:
            raise ValueError("subset must keep at least one record")
        return RoutingDataset(
            catalog=self.catalog,
            records=tuple(self.records[i] for i in indices),
            meta=self.meta,
        )

    def record_by_id(self, record_id: str) -> QueryRecord:
        for record in self.records:
            if record.id == record_id:
                return record
        raise KeyError(f"no record with id {record_id!r}")


@dataclass(frozen=True)
class Preference:
    """A cost/performance trade-off: an explicit lam or a named preset."""

    lam: float | None = None
    preset: str | None = None

    def __post_init__(self) -> None:
        if (self.lam is None) == (self.preset is None):
            raise ValueError("exactly one of lam/preset must be given")
        if self.lam is not None:
            lam = _require_finite(self.lam, "lam")
            if lam < 0:
                raise ValueError(f"lam must be >= 0, got {lam}")
            object.__setattr__(self, "lam", lam)
        if self.preset is not None and self.preset not in PRESET_WEIGHTS:
            raise ValueError(
                f"unknown preset {self.preset!r}; valid: {sorted(PRESET_WEIGHTS)}"
            )

    def resolve(self, c_max: float) -> float:
        if self.lam is not None:
            return self.lam
        return resolve_preset(self.preset, c_max)


@dataclass(frozen=True, eq=False)
class UtilityEstimate:
    """Predicted (score, cost) per catalog model, in catalog order."""

    models: tuple[str, ...]
    scores: np.ndarray
    costs: np.ndarray

    def __post_init__(self) -> None:
        if not self.models:
            raise ValueError("estimate must cover at least one model")
        scores = np.asarray(self.scores, dtype=np.float64)
        costs = np.asarray(self.costs, dtype=np.float64)
        if scores.shape != (len(self.models),) or costs.shape != (len(self.models),):
            raise ValueError("scores/costs must be 1-D with one entry per model")
        if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(costs))):
            raise ValueError("estimate entries must all be finite")
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "costs", costs)

    @classmethod
    def from_dict(cls, per_model: Mapping[str, tuple[float, float]], order=None):
        models = tuple(order) if order is not None else tuple(per_model)
        scores = np.array([per_model[m][0] for m in models], dtype=np.float64)
        costs = np.array([per_model[m][1] for m in models], dtype=np.float64)
        return cls(models=models, scores=scores, costs=costs)

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {
            m: (float(s), float(c))
            for m, s, c in zip(self.models, self.scores, self.costs)
        }


def utility(score: float, cost: float, lam: float) -> float:
    """Utility of an outcome at trade-off ``lam``: ``score - lam * cost``."""
    score = _require_finite(score, "score")
    cost = _require_finite(cost, "cost")
    lam = _require_finite(lam, "lam")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    return score - lam * cost


def resolve_preset(preset: str, c_max: float) -> float:
    """Map a named preference preset to lam = weight / c_max.

    low_cost -> 1.0 / c_max, balanced -> 0.5 / c_max,
    high_performance -> 0.1 / c_max.
    """
    if preset not in PRESET_WEIGHTS:
        raise ValueError(f"unknown preset {preset!r}; valid: {sorted(PRESET_WEIGHTS)}")
    c_max = _require_finite(c_max, "c_max")
    if c_max <= 0:
        raise ValueError(f"c_max must be > 0, got {c_max}")
    return PRESET_WEIGHTS[preset] / c_max


def argmax_utility(estimate: UtilityEstimate, lam: float) -> str:
    """Model with maximal predicted utility.

    Ties are broken deterministically: lower predicted cost first, then
    catalog (estimate) order.
    """
    lam = _require_finite(lam, "lam")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    utilities = estimate.scores - lam * estimate.costs
    order = np.lexsort(
        (np.arange(len(estimate.models)), estimate.costs, -utilities)
    )
    return estimate.models[int(order[0])]


def argmax_utility_index(
    scores: np.ndarray, costs: np.ndarray, lam: float
) -> int:
    """Index form of :func:`argmax_utility` for matrix-valued callers."""
    utilities = scores - lam * costs
    order = np.lexsort((np.arange(scores.shape[0]), costs, -utilities))
    return int(order[0])
