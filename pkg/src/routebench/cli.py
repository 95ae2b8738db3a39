"""Command-line entry point: split, fit, eval, analyze, serve, report.

One JSON config file can drive the whole split -> fit -> eval pipeline;
individual flags override config fields. Every machine-readable output
embeds the effective config's hash and the seed, and reruns with identical
configs produce byte-identical outputs.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import analysis, dataio, eval as evalmod
from .core import PRESET_ORDER, resolve_preset
from .dataio import SchemaError, SplitSpec
from .routers import (
    ARCHITECTURES,
    ContractError,
    RouterConfig,
    TrainingError,
    fit_router,
    load_router,
    save_router,
)
from .service import serve as serve_forever

logger = logging.getLogger(__name__)


class UsageError(ValueError):
    """Bad flags or config; maps to exit code 2."""


def _config_hash(effective: dict) -> str:
    """Hash of the semantic config (output location excluded)."""
    doc = {k: v for k, v in effective.items() if k != "out"}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return doc


def _merge(config: dict, args: argparse.Namespace, keys: dict) -> dict:
    """Start from the config file, then apply non-None CLI overrides."""
    effective = dict(config)
    for arg_name, config_key in keys.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            effective[config_key] = value
    return effective


def _require(effective: dict, key: str) -> str:
    if key not in effective or effective[key] in (None, ""):
        raise UsageError(f"missing required setting {key!r} (flag or config)")
    return effective[key]


def _split_spec(effective: dict) -> SplitSpec:
    raw = dict(effective.get("split", {}))
    if "seed" in effective and effective["seed"] is not None:
        raw["seed"] = effective["seed"]
    try:
        return SplitSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad split spec: {exc}") from exc


def _router_config(effective: dict) -> RouterConfig:
    raw = dict(effective.get("router", {}).get("config", {}))
    valid = {f.name for f in fields(RouterConfig)}
    unknown = set(raw) - valid
    if unknown:
        raise UsageError(f"unknown router config fields {sorted(unknown)}")
    try:
        return RouterConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad router config: {exc}") from exc


def _load_benchmark(effective: dict):
    dataset = dataio.load_dataset(
        _require(effective, "dataset"), _require(effective, "catalog")
    )
    return dataio.normalize_embeddings(dataset)


def _dataset_label(effective: dict) -> str:
    return effective.get("name") or Path(effective["dataset"]).stem


# ---------------------------------------------------------------------------
# Subcommands


def cmd_split(args) -> int:
    effective = _merge(
        _load_config(args.config),
        args,
        {"dataset": "dataset", "catalog": "catalog", "seed": "seed", "out": "out"},
    )
    spec = _split_spec(effective)
    dataset = _load_benchmark(effective)
    split = dataio.split_dataset(dataset, spec)
    out_dir = Path(_require(effective, "out"))
    paths = dataio.write_split_manifests(
        split, out_dir, extra={"config_hash": _config_hash(effective)}
    )
    print(
        f"split {len(dataset)} records -> train {len(split.train)}, "
        f"val {len(split.val)}, test {len(split.test)}"
    )
    for part, path in paths.items():
        print(f"  {part}: {path}")
    return 0


def _resolve_split(effective: dict, dataset):
    """Use manifests under out/ when present, else recompute from the seed."""
    out_dir = Path(_require(effective, "out"))
    manifest = out_dir / "train_ids.json"
    if manifest.exists():
        return dataio.Split(
            train=dataio.apply_manifest(dataset, out_dir / "train_ids.json"),
            val=dataio.apply_manifest(dataset, out_dir / "val_ids.json"),
            test=dataio.apply_manifest(dataset, out_dir / "test_ids.json"),
            spec=_split_spec(effective),
        )
    return dataio.split_dataset(dataset, _split_spec(effective))


def cmd_fit(args) -> int:
    effective = _merge(
        _load_config(args.config),
        args,
        {
            "dataset": "dataset",
            "catalog": "catalog",
            "seed": "seed",
            "out": "out",
        },
    )
    router_section = dict(effective.get("router", {}))
    if args.arch is not None:
        router_section["arch"] = args.arch
    if args.formulation is not None:
        router_section["formulation"] = args.formulation
    if args.lam is not None:
        router_section["lambda"] = args.lam
    effective["router"] = router_section

    arch = router_section.get("arch")
    if arch not in ARCHITECTURES:
        raise UsageError(
            f"unknown architecture {arch!r}; valid: {', '.join(ARCHITECTURES)}"
        )
    formulation = router_section.get("formulation", "utility")
    config = _router_config(effective)
    if effective.get("seed") is not None:
        config = replace(config, seed=int(effective["seed"]))

    dataset = _load_benchmark(effective)
    split = _resolve_split(effective, dataset)
    out_dir = Path(_require(effective, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    config_hash = _config_hash(effective)
    benchmark_c_max = dataio.c_max(dataset)

    # Parametric selection routers are trained per preference; with no
    # explicit lam we fit one router per preset. kNN selection votes at
    # query time and needs a single index regardless of lam.
    to_fit: list[tuple[Path, float | None]] = []
    if (
        formulation == "selection"
        and arch != "knn"
        and router_section.get("lambda") is None
    ):
        for preset in PRESET_ORDER:
            to_fit.append(
                (out_dir / f"router_{preset}.json", resolve_preset(preset, benchmark_c_max))
            )
    else:
        to_fit.append((out_dir / "router.json", router_section.get("lambda")))

    log_path = out_dir / "train_log.json"
    fitted = []
    try:
        for router_path, lam in to_fit:
            router = fit_router(
                split.train,
                arch,
                formulation,
                config=config,
                lam=lam,
                val=split.val if len(split.val) else None,
                c_max=benchmark_c_max,
            )
            router.meta["config_hash"] = config_hash
            version = save_router(router, router_path)
            fitted.append((router_path, version, router))
    except TrainingError:
        for router_path, _ in to_fit:
            router_path.unlink(missing_ok=True)
        log_path.unlink(missing_ok=True)
        raise
    log = {
        "config_hash": config_hash,
        "seed": config.seed,
        "arch": arch,
        "formulation": formulation,
        "routers": [
            {
                "path": path.name,
                "router_version": version,
                "loss_history": router.meta.get("loss_history"),
                "epochs_run": router.meta.get("epochs_run"),
                "final_train_loss": router.meta.get("final_train_loss"),
                "trained_lambda": router.meta.get("trained_lambda"),
            }
            for path, version, router in fitted
        ],
    }
    log_path.write_bytes(
        json.dumps(log, sort_keys=True, separators=(",", ":")).encode("utf-8")
    )
    for path, version, _ in fitted:
        print(f"fitted {arch}/{formulation} -> {path} (version {version[:12]})")
    return 0


def cmd_eval(args) -> int:
    effective = _merge(
        _load_config(args.config),
        args,
        {
            "dataset": "dataset",
            "catalog": "catalog",
            "seed": "seed",
            "out": "out",
            "router_path": "router_path",
        },
    )
    dataset = _load_benchmark(effective)
    split = _resolve_split(effective, dataset)
    out_dir = Path(_require(effective, "out"))
    benchmark_c_max = dataio.c_max(dataset)
    label = _dataset_label(effective)
    config_hash = _config_hash(effective)
    seed = _split_spec(effective).seed

    preset_paths = {
        preset: out_dir / f"router_{preset}.json" for preset in PRESET_ORDER
    }
    router_path = Path(effective.get("router_path") or out_dir / "router.json")
    per_preset = None
    if effective.get("router_path") is None and all(
        p.exists() for p in preset_paths.values()
    ):
        per_preset = {p: load_router(path) for p, path in preset_paths.items()}
        router = next(iter(per_preset.values()))
    elif router_path.exists():
        router = load_router(router_path)
    else:
        raise UsageError(f"router file {router_path} does not exist; run fit first")

    curves: dict = {}
    reports: dict = {}
    if per_preset is None and router.formulation == "utility":
        grid_setting = effective.get("eval", {}).get("grid", "default")
        if grid_setting == "default":
            grid = evalmod.default_lambda_grid(benchmark_c_max)
        else:
            grid = [float(v) for v in grid_setting]
        norm = evalmod.EvalNorm.for_benchmark(split.test, benchmark_c_max)
        curves[label] = {
            "oracle": evalmod.oracle_curve(split.test, grid, norm),
            "random": evalmod.random_curve(split.test, norm),
            router.arch: evalmod.evaluate_utility_router(
                router, split.test, grid, norm
            ),
        }
    else:
        reports[label] = {
            "oracle": evalmod.oracle_selection_report(split.test, benchmark_c_max),
            "random": evalmod.random_selection_report(split.test, benchmark_c_max),
            router.arch: evalmod.selection_eval(
                per_preset if per_preset is not None else router,
                split.test,
                benchmark_c_max,
            ),
        }
    paths = evalmod.emit_report(
        curves, reports, out_dir, config_hash=config_hash, seed=seed
    )
    print(f"wrote {paths['results']} and {paths['table']}")
    return 0


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode())


def _synthetic_config(args) -> analysis.SyntheticConfig:
    try:
        return analysis.SyntheticConfig(
            latent_dim=args.latent_dim,
            ambient_dim=args.ambient_dim,
            n_models=args.models,
            lipschitz_l=args.lipschitz,
            noise_sd=args.noise,
            n_queries=args.n,
            seed=args.seed if args.seed is not None else 0,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _args_hash(args) -> str:
    doc = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func", "out") and v is not None
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = {"seed": args.seed if args.seed is not None else 0}

    if args.what == "synthetic":
        config = _synthetic_config(args)
        dataset = analysis.generate_synthetic(config)
        dataio.save_dataset(dataset, out_dir / "dataset.jsonl")
        dataio.save_catalog(dataset.catalog, out_dir / "catalog.json")
        print(f"wrote {out_dir / 'dataset.jsonl'} ({len(dataset)} records)")
        return 0

    if args.what == "regret":
        config = _synthetic_config(args)
        train_sizes = [int(v) for v in args.train_sizes.split(",")]
        archs = tuple(args.archs.split(","))
        curve = analysis.regret_experiment(
            config,
            train_sizes,
            k=args.k,
            lam=args.lam if args.lam is not None else 0.0,
            trials=args.trials,
            arch_list=archs,
            test_size=args.test_size,
        )
        doc = curve.to_jsonable()
        doc.update(stamp, config_hash=_args_hash(args))
        _write_json(out_dir / "regret.json", doc)
        print(f"wrote {out_dir / 'regret.json'}")
        return 0

    # remaining modes need a dataset on disk
    if not args.dataset or not args.catalog:
        raise UsageError(f"analyze {args.what} needs --dataset and --catalog")
    dataset = dataio.normalize_embeddings(
        dataio.load_dataset(args.dataset, args.catalog)
    )

    if args.what == "locality":
        curve = analysis.locality_curve(
            dataset,
            n_pairs=args.pairs,
            bins=args.bins,
            tau=args.tau,
            seed=args.seed if args.seed is not None else 0,
            metric=args.metric,
        )
        doc = curve.to_jsonable()
        doc.update(stamp, config_hash=_args_hash(args))
        _write_json(out_dir / "locality.json", doc)
        print(f"wrote {out_dir / 'locality.json'}")
        return 0

    if args.what == "epsilon":
        deltas = [float(v) for v in args.delta.split(",")]
        values = {
            str(d): analysis.epsilon_hat(
                dataset,
                d,
                quantile=args.quantile,
                lam=args.lam if args.lam is not None else 0.0,
                n_pairs=args.pairs,
                seed=args.seed if args.seed is not None else 0,
                metric=args.metric,
            )
            for d in deltas
        }
        doc = {"epsilon_hat": values, "quantile": args.quantile, "metric": args.metric}
        doc.update(stamp, config_hash=_args_hash(args))
        _write_json(out_dir / "epsilon.json", doc)
        print(f"wrote {out_dir / 'epsilon.json'}")
        return 0

    if args.what == "covering":
        radii = [float(v) for v in args.radii.split(",")]
        counts = {
            str(r): analysis.covering_number(
                dataset.embedding_matrix, r, metric=args.metric
            )
            for r in radii
        }
        doc = {"covering": counts, "metric": args.metric}
        doc.update(stamp, config_hash=_args_hash(args))
        _write_json(out_dir / "covering.json", doc)
        print(f"wrote {out_dir / 'covering.json'}")
        return 0

    raise UsageError(f"unknown analyze mode {args.what!r}")


def cmd_serve(args) -> int:
    effective = _merge(
        _load_config(args.config),
        args,
        {"catalog": "catalog", "router_path": "router_path", "dataset": "dataset"},
    )
    router_path = Path(_require(effective, "router_path"))
    if not router_path.exists():
        raise UsageError(f"router file {router_path} does not exist")
    router = load_router(router_path)
    if effective.get("catalog"):
        catalog = dataio.load_catalog(effective["catalog"])
        if catalog.names != router.catalog.names:
            raise UsageError(
                "catalog file and router catalog disagree: "
                f"{catalog.names} vs {router.catalog.names}"
            )
    dataset = None
    if effective.get("dataset"):
        dataset = dataio.normalize_embeddings(
            dataio.load_dataset(effective["dataset"], effective["catalog"])
        )
    host, _, port = args.bind.partition(":")
    try:
        bind = (host or "127.0.0.1", int(port or "8080"))
    except ValueError as exc:
        raise UsageError(f"bad --bind {args.bind!r}: {exc}") from exc
    print(f"serving {router_path} on {bind[0]}:{bind[1]}")
    serve_forever(router_path, dataset=dataset, bind=bind)
    return 0


def cmd_report(args) -> int:
    results_path = Path(args.results)
    if not results_path.exists():
        raise UsageError(f"results file {results_path} does not exist")
    payload = json.loads(results_path.read_text(encoding="utf-8"))
    sections = []
    auc_rows: dict = {}
    for dataset, row in payload.get("auc", {}).items():
        for label, curve in row.items():
            auc_rows.setdefault(label, {})[dataset] = curve["auc"]
    if auc_rows:
        sections.append(evalmod.render_table("Pareto hull AUC (max 100)", auc_rows))
    sel_rows: dict = {}
    for dataset, row in payload.get("selection", {}).items():
        for label, report in row.items():
            sel_rows.setdefault(label, {})[dataset] = report["average"]
    if sel_rows:
        sections.append(
            evalmod.render_table("Mean utility, averaged over presets", sel_rows)
        )
    if not sections:
        raise UsageError(f"{results_path} contains no results")
    footer = (
        f"config_hash: {payload.get('config_hash', '')}\n"
        f"seed: {payload.get('seed')}\n"
    )
    out_path = Path(args.out) / "report.txt" if args.out else results_path.with_name(
        "report.txt"
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(sections) + footer, encoding="utf-8")
    print(f"wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(parser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--dataset", help="dataset JSONL path")
    parser.add_argument("--catalog", help="catalog JSON path")
    parser.add_argument("--seed", type=int, help="split / training seed")
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routebench",
        description="Fit, evaluate, analyze, and serve LLM routers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="write train/val/test id manifests")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("fit", help="fit a router on the train split")
    _add_common(p)
    p.add_argument("--arch", help=f"architecture: {', '.join(ARCHITECTURES)}")
    p.add_argument(
        "--formulation", choices=("utility", "selection"), help="router formulation"
    )
    p.add_argument(
        "--lambda", dest="lam", type=float, help="training lam for selection routers"
    )
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a fitted router on the test split")
    _add_common(p)
    p.add_argument("--router-path", dest="router_path", help="router file to evaluate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="locality / covering / regret experiments")
    p.add_argument(
        "what", choices=("locality", "epsilon", "covering", "regret", "synthetic")
    )
    p.add_argument("--dataset", help="dataset JSONL path")
    p.add_argument("--catalog", help="catalog JSON path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--metric", choices=analysis.METRICS, default="euclidean")
    p.add_argument("--pairs", type=int, default=20000)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--tau", type=float, help="agreement threshold")
    p.add_argument("--delta", default="0.1", help="comma-separated radii")
    p.add_argument("--quantile", type=float, default=0.95)
    p.add_argument("--radii", default="0.1,0.2,0.4,0.8,1.6")
    p.add_argument("--lambda", dest="lam", type=float, help="utility trade-off")
    p.add_argument("--latent-dim", type=int, default=2)
    p.add_argument("--ambient-dim", type=int, default=16)
    p.add_argument("--models", type=int, default=4)
    p.add_argument("--lipschitz", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--train-sizes", default="50,100,200,400,800")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--archs", default="knn,mlp")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="serve routing decisions over HTTP")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--router-path", dest="router_path", help="router file to serve")
    p.add_argument("--catalog", help="catalog JSON path (consistency check)")
    p.add_argument("--dataset", help="optional dataset for record_id requests")
    p.add_argument("--bind", default="127.0.0.1:8080", help="host:port")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="re-render the table from a results file")
    p.add_argument("--results", required=True, help="results.json path")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SchemaError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
