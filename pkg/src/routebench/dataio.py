"""Dataset and catalog file formats, cost computation, deterministic splits.

File formats
------------
Catalog: a single JSON document, ``{"models": [{"name", "input_price",
"output_price"}, ...]}``. The order of the list is the catalog order and
therefore the tie-break order.

Dataset: UTF-8 JSONL, one record per line:
``{"id": ..., "embedding": [...], "outcomes": {model: {"score": ...,
"cost": ...}}}``. An outcome may carry ``input_tokens``/``output_tokens``
instead of (or in addition to) ``cost``; a missing cost is filled in from
the catalog pricing.

Embedding file (produced by the external embedder): a JSON header line with
``encoder`` and ``dim`` keys, then ``{"id", "embedding"}`` lines.

Costs are stored as binary64 and never rounded internally.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ModelCatalog,
    Outcome,
    Pricing,
    QueryRecord,
    RoutingDataset,
)


class SchemaError(ValueError):
    """A dataset, catalog, or embedding file violates its schema."""


FRACTION_ATOL = 1e-12


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions and the seed of the shuffling permutation."""

    train_frac: float = 0.70
    val_frac: float = 0.10
    test_frac: float = 0.20
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not (f > 0) for f in fracs):
            raise ValueError(f"fractions must all be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > FRACTION_ATOL:
            raise ValueError(f"fractions must sum to 1.0, got {sum(fracs)!r}")
        seed = int(self.seed)
        if not (0 <= seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", seed)


@dataclass(frozen=True)
class Split:
    """Disjoint train/val/test views sharing one catalog."""

    train: RoutingDataset
    val: RoutingDataset
    test: RoutingDataset
    spec: SplitSpec


def compute_cost(input_tokens: int, output_tokens: int, pricing: Pricing) -> float:
    """USD cost of a call: tokens times per-million-token prices."""
    input_tokens = int(input_tokens)
    output_tokens = int(output_tokens)
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError(
            f"token counts must be >= 0, got {input_tokens}/{output_tokens}"
        )
    return (
        input_tokens * pricing.input_price + output_tokens * pricing.output_price
    ) / 1e6


def load_catalog(path) -> ModelCatalog:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"catalog {path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "models" not in doc:
        raise SchemaError(f"catalog {path}: expected an object with a 'models' list")
    entries = []
    for i, item in enumerate(doc["models"]):
        try:
            entries.append(
                (
                    item["name"],
                    Pricing(
                        input_price=item["input_price"],
                        output_price=item["output_price"],
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"catalog {path}: bad model entry {i}: {exc}") from exc
    if not entries:
        raise SchemaError(f"catalog {path}: empty model list")
    try:
        return ModelCatalog(entries=tuple(entries))
    except ValueError as exc:
        raise SchemaError(f"catalog {path}: {exc}") from exc


def save_catalog(catalog: ModelCatalog, path) -> None:
    doc = {
        "models": [
            {
                "name": name,
                "input_price": pricing.input_price,
                "output_price": pricing.output_price,
            }
            for name, pricing in catalog
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _parse_outcome(raw: dict, pricing: Pricing, where: str) -> Outcome:
    if not isinstance(raw, dict) or "score" not in raw:
        raise SchemaError(f"{where}: outcome must be an object with a 'score'")
    input_tokens = raw.get("input_tokens")
    output_tokens = raw.get("output_tokens")
    cost = raw.get("cost")
    if cost is None:
        if input_tokens is None or output_tokens is None:
            raise SchemaError(f"{where}: outcome needs a cost or both token counts")
        cost = compute_cost(input_tokens, output_tokens, pricing)
    try:
        return Outcome(
            score=raw["score"],
            cost=cost,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def load_dataset(dataset_path, catalog_path) -> RoutingDataset:
    """Load and validate a JSONL dataset against a catalog file.

    Raises :class:`SchemaError` naming the offending record and model for
    missing outcomes, on dimension mismatches, and on duplicate record ids.
    """
    catalog = load_catalog(catalog_path)
    dataset_path = Path(dataset_path)
    records: list[QueryRecord] = []
    seen: set[str] = set()
    dim: int | None = None
    with dataset_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(
                    f"{dataset_path}:{lineno}: invalid JSON: {exc}"
                ) from exc
            try:
                rid = str(raw["id"])
                embedding = raw["embedding"]
                raw_outcomes = raw["outcomes"]
            except (KeyError, TypeError) as exc:
                raise SchemaError(
                    f"{dataset_path}:{lineno}: record needs id/embedding/outcomes"
                ) from exc
            if rid in seen:
                raise SchemaError(f"duplicate record id {rid!r} at line {lineno}")
            seen.add(rid)
            outcomes = {}
            for name, _ in catalog:
                if name not in raw_outcomes:
                    raise SchemaError(f"record {rid} missing outcome for {name}")
                outcomes[name] = _parse_outcome(
                    raw_outcomes[name], catalog.pricing(name), f"record {rid} model {name}"
                )
            extra = set(raw_outcomes) - set(catalog.names)
            if extra:
                raise SchemaError(
                    f"record {rid} has outcomes for unknown models {sorted(extra)}"
                )
            try:
                record = QueryRecord(id=rid, embedding=embedding, outcomes=outcomes)
            except ValueError as exc:
                raise SchemaError(f"record {rid}: {exc}") from exc
            if dim is None:
                dim = record.dim
            elif record.dim != dim:
                raise SchemaError(
                    f"record {rid} has dim {record.dim}, expected {dim}"
                )
            records.append(record)
    if not records:
        raise SchemaError(f"{dataset_path}: no records")
    try:
        return RoutingDataset(
            catalog=catalog, records=tuple(records), meta=str(dataset_path)
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def save_dataset(dataset: RoutingDataset, path) -> None:
    """Write a dataset in canonical JSONL form (load/save round-trips)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in dataset.records:
            outcomes = {}
            for name in dataset.catalog.names:
                outcome = record.outcomes[name]
                entry: dict = {"score": outcome.score, "cost": outcome.cost}
                if outcome.input_tokens is not None:
                    entry["input_tokens"] = outcome.input_tokens
                if outcome.output_tokens is not None:
                    entry["output_tokens"] = outcome.output_tokens
                outcomes[name] = entry
            line = json.dumps(
                {
                    "id": record.id,
                    "embedding": record.embedding.tolist(),
                    "outcomes": outcomes,
                },
                separators=(",", ":"),
            )
            fh.write(line + "\n")


def normalize_embeddings(dataset: RoutingDataset) -> RoutingDataset:
    """Rescale every embedding to unit L2 norm, preserving direction."""
    records = []
    for record in dataset.records:
        norm = float(np.linalg.norm(record.embedding))
        if norm == 0.0:
            raise ValueError(f"record {record.id!r} has a zero embedding")
        records.append(
            QueryRecord(
                id=record.id,
                embedding=record.embedding / norm,
                outcomes=record.outcomes,
            )
        )
    return RoutingDataset(
        catalog=dataset.catalog, records=tuple(records), meta=dataset.meta
    )


MIN_SPLIT_SIZE = 10


def split_dataset(dataset: RoutingDataset, spec: SplitSpec | None = None) -> Split:
    """Deterministic shuffled split; same seed gives byte-identical splits.

    Sizes are floor(n * frac) for val and test with the remainder assigned
    to train, so train is never starved by rounding.
    """
    spec = spec if spec is not None else SplitSpec()
    n = len(dataset)
    if n < MIN_SPLIT_SIZE:
        raise ValueError(f"need at least {MIN_SPLIT_SIZE} records to split, got {n}")
    n_val = math.floor(n * spec.val_frac)
    n_test = math.floor(n * spec.test_frac)
    n_train = n - n_val - n_test
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx = perm[:n_train]
    val_idx = perm[n_train : n_train + n_val]
    test_idx = perm[n_train + n_val :]
    return Split(
        train=dataset.subset(train_idx),
        val=dataset.subset(val_idx),
        test=dataset.subset(test_idx),
        spec=spec,
    )


def c_max(dataset: RoutingDataset) -> float:
    """Maximum cost over all (record, model) cells of the benchmark."""
    return float(dataset.cost_matrix.max())


def write_split_manifests(split: Split, out_dir, extra: dict | None = None) -> dict[str, Path]:
    """Write one id-list file per split (plus the seed) for exact reproduction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for part in ("train", "val", "test"):
        ds: RoutingDataset = getattr(split, part)
        doc = {
            "split": part,
            "seed": split.spec.seed,
            "fractions": [
                split.spec.train_frac,
                split.spec.val_frac,
                split.spec.test_frac,
            ],
            "ids": list(ds.ids),
        }
        if extra:
            doc.update(extra)
        path = out_dir / f"{part}_ids.json"
        path.write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
        paths[part] = path
    return paths


def apply_manifest(dataset: RoutingDataset, manifest_path) -> RoutingDataset:
    """Subset a dataset to the ids listed in a split manifest, in order."""
    doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    by_id = {record.id: i for i, record in enumerate(dataset.records)}
    try:
        indices = [by_id[rid] for rid in doc["ids"]]
    except KeyError as exc:
        raise SchemaError(f"manifest id {exc} not present in dataset") from exc
    return dataset.subset(indices)


def load_embeddings(path) -> tuple[dict, list[str], np.ndarray]:
    """Load an embedder-produced embedding file.

    Returns ``(header, ids, matrix)`` where the header is the first-line
    JSON object (with at least ``encoder`` and ``dim``) and the matrix rows
    follow the file's record order.
    """
    path = Path(path)
    header: dict | None = None
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if header is None:
                if not isinstance(raw, dict) or "encoder" not in raw or "dim" not in raw:
                    raise SchemaError(
                        f"{path}: first line must be a header with encoder and dim"
                    )
                header = raw
                continue
            if "id" not in raw or "embedding" not in raw:
                raise SchemaError(f"{path}:{lineno}: record needs id and embedding")
            rid = str(raw["id"])
            if rid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            vec = np.asarray(raw["embedding"], dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != int(header["dim"]):
                raise SchemaError(
                    f"{path}:{lineno}: embedding dim {vec.shape} does not match "
                    f"header dim {header['dim']}"
                )
            if not np.all(np.isfinite(vec)):
                raise SchemaError(f"{path}:{lineno}: non-finite embedding entries")
            ids.append(rid)
            rows.append(vec)
    if header is None:
        raise SchemaError(f"{path}: missing header line")
    if not rows:
        raise SchemaError(f"{path}: no embedding records")
    return header, ids, np.stack(rows)
