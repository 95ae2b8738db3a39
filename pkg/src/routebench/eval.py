"""Cost-performance evaluation: lambda sweeps, Pareto hull AUC, preset scoring.

Utility-prediction routers are swept over a lam grid; at each lam the
router picks one model per test query and the mean of the *actual*
(cost, score) pairs becomes one point. The non-decreasing convex hull of
those points is integrated (costs normalized so the benchmark's maximum
cost is 1, scores so the maximum observed test score is 100) to give an
AUC in [0, 100].

Selection routers cannot trace a Pareto front, so they are scored at the
three named presets and the per-preset mean utilities are averaged.

Both protocols are reported against an oracle router (per-query argmax of
true utility, the upper reference) and a uniform-random baseline
(evaluated analytically as the mean over models).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    PRESET_ORDER,
    RoutingDataset,
    UtilityEstimate,
    argmax_utility,
    argmax_utility_index,
    resolve_preset,
    utility,
)
from .routers.base import FittedRouter, select_model

DEFAULT_GRID_POINTS = 101
DEFAULT_GRID_SPAN = (1e-3, 1e3)


@dataclass(frozen=True)
class ParetoPoint:
    """Mean actual (cost, score) of routed test queries at one lam."""

    cost: float
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cost) and math.isfinite(self.score)):
            raise ValueError("pareto point must be finite")
        if self.cost < 0:
            raise ValueError("mean cost must be >= 0")


@dataclass(frozen=True)
class EvalNorm:
    """Normalization scales: score_scale maps to 100, cost_scale maps to 1."""

    score_scale: float
    cost_scale: float

    def __post_init__(self) -> None:
        if not (self.score_scale > 0 and self.cost_scale > 0):
            raise ValueError("normalization scales must be positive")

    @classmethod
    def for_benchmark(cls, test: RoutingDataset, benchmark_c_max: float) -> "EvalNorm":
        """Score scale from the test split's observed maximum, cost scale
        from the full benchmark's maximum cost."""
        return cls(
            score_scale=float(test.score_matrix.max()), cost_scale=benchmark_c_max
        )


@dataclass(frozen=True)
class ParetoCurve:
    """Raw swept points, the retained hull, and the resulting AUC."""

    lambdas: tuple[float, ...]
    points: tuple[ParetoPoint, ...]
    hull: tuple[ParetoPoint, ...]
    auc: float
    norm: EvalNorm

    def to_jsonable(self) -> dict:
        hull_set = {(p.cost, p.score) for p in self.hull}
        return {
            "auc": self.auc,
            "norm": {
                "score_scale": self.norm.score_scale,
                "cost_scale": self.norm.cost_scale,
            },
            "points": [
                {
                    "lambda": lam,
                    "cost": point.cost,
                    "score": point.score,
                    "on_hull": (point.cost, point.score) in hull_set,
                }
                for lam, point in zip(self.lambdas, self.points)
            ],
            "hull": [{"cost": p.cost, "score": p.score} for p in self.hull],
        }


@dataclass(frozen=True)
class SelectionReport:
    """Per-preset mean utility, their average, and chosen-model counts."""

    per_preset: dict[str, float]
    average: float
    histograms: dict[str, dict[str, int]]

    def to_jsonable(self) -> dict:
        return {
            "per_preset": dict(self.per_preset),
            "average": self.average,
            "histograms": {k: dict(v) for k, v in self.histograms.items()},
        }


def default_lambda_grid(benchmark_c_max: float) -> list[float]:
    """lam = 0 plus 101 log-spaced multiples of 1/c_max spanning [1e-3, 1e3]."""
    if not benchmark_c_max > 0:
        raise ValueError("c_max must be positive")
    lo, hi = DEFAULT_GRID_SPAN
    multiples = np.logspace(math.log10(lo), math.log10(hi), DEFAULT_GRID_POINTS)
    return [0.0] + [float(m / benchmark_c_max) for m in multiples]


def route_testset(
    router: FittedRouter, test: RoutingDataset, lam: float
) -> ParetoPoint:
    """Route every test query at lam; mean the actual outcomes chosen."""
    if len(test) == 0:
        raise ValueError("test set must be nonempty")
    total_cost = 0.0
    total_score = 0.0
    for record in test.records:
        chosen = select_model(router, record.embedding, lam)
        outcome = record.outcomes[chosen]
        total_cost += outcome.cost
        total_score += outcome.score
    n = len(test)
    return ParetoPoint(cost=total_cost / n, score=total_score / n)


def _check_grid(grid) -> list[float]:
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("lambda grid must be nonempty")
    if any(v < 0 for v in grid):
        raise ValueError("lambda grid values must be >= 0")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be sorted ascending")
    return grid


def lambda_sweep(
    router: FittedRouter, test: RoutingDataset, grid
) -> list[ParetoPoint]:
    """One :func:`route_testset` point per lam.

    Utility predictions are computed once per query and re-ranked per lam,
    which is equivalent to calling route_testset per lam and much faster.
    """
    grid = _check_grid(grid)
    if len(test) == 0:
        raise ValueError("test set must be nonempty")
    estimates: list[UtilityEstimate] = [
        router.predict_utility(record.embedding) for record in test.records
    ]
    points = []
    n = len(test)
    for lam in grid:
        total_cost = 0.0
        total_score = 0.0
        for record, estimate in zip(test.records, estimates):
            chosen = argmax_utility(estimate, lam)
            outcome = record.outcomes[chosen]
            total_cost += outcome.cost
            total_score += outcome.score
        points.append(ParetoPoint(cost=total_cost / n, score=total_score / n))
    return points


def pareto_hull(points) -> list[ParetoPoint]:
    """Undominated points that are vertices of the upper convex hull.

    A point is dominated when another point has no higher cost and no lower
    score (one strictly better). Of the survivors, only vertices of the
    concave (upper) hull are kept; collinear interior points are dropped.
    The result is sorted by cost with strictly increasing scores.
    """
    unique = sorted({(p.cost, p.score) for p in points})
    if not unique:
        raise ValueError("need at least one point")
    frontier: list[tuple[float, float]] = []
    best_score = -math.inf
    for cost, score in unique:  # ascending cost, ascending score within cost
        if score > best_score:
            # remove earlier entries at the same cost (they are dominated)
            while frontier and frontier[-1][0] == cost:
                frontier.pop()
            frontier.append((cost, score))
            best_score = score
    hull: list[tuple[float, float]] = []
    for point in frontier:
        while len(hull) >= 2:
            (oc, os), (ac, a_s) = hull[-2], hull[-1]
            cross = (ac - oc) * (point[1] - os) - (a_s - os) * (point[0] - oc)
            if cross >= 0:  # middle point on or below the chord
                hull.pop()
            else:
                break
        hull.append(point)
    return [ParetoPoint(cost=c, score=s) for c, s in hull]


def auc(hull, norm: EvalNorm) -> float:
    """Area under the normalized hull from its leftmost cost to cost 1.

    Costs are divided by ``cost_scale`` and scores mapped so ``score_scale``
    becomes 100. The curve extends rightward from the last hull point at
    constant score; the region left of the cheapest achieved point
    contributes zero area.
    """
    if not hull:
        raise ValueError("hull must be nonempty")
    costs = [p.cost / norm.cost_scale for p in hull]
    scores = [p.score / norm.score_scale * 100.0 for p in hull]
    area = 0.0
    for (c1, s1), (c2, s2) in zip(zip(costs, scores), zip(costs[1:], scores[1:])):
        if c2 <= 1.0:
            area += 0.5 * (c2 - c1) * (s1 + s2)
        elif c1 < 1.0:
            s_at_1 = s1 + (s2 - s1) * (1.0 - c1) / (c2 - c1)
            area += 0.5 * (1.0 - c1) * (s1 + s_at_1)
            return area
        else:
            return area
    last_cost, last_score = costs[-1], scores[-1]
    if last_cost < 1.0:
        area += (1.0 - last_cost) * last_score
    return area


def build_curve(grid, points, norm: EvalNorm) -> ParetoCurve:
    hull = pareto_hull(points)
    return ParetoCurve(
        lambdas=tuple(float(v) for v in grid),
        points=tuple(points),
        hull=tuple(hull),
        auc=auc(hull, norm),
        norm=norm,
    )


def evaluate_utility_router(
    router: FittedRouter, test: RoutingDataset, grid, norm: EvalNorm
) -> ParetoCurve:
    return build_curve(grid, lambda_sweep(router, test, grid), norm)


def oracle_points(test: RoutingDataset, grid) -> list[ParetoPoint]:
    grid = _check_grid(grid)
    S, C = test.score_matrix, test.cost_matrix
    n = S.shape[0]
    points = []
    for lam in grid:
        total_cost = 0.0
        total_score = 0.0
        for i in range(n):
            best = argmax_utility_index(S[i], C[i], lam)
            total_cost += C[i, best]
            total_score += S[i, best]
        points.append(ParetoPoint(cost=total_cost / n, score=total_score / n))
    return points


def oracle_curve(test: RoutingDataset, grid, norm: EvalNorm) -> ParetoCurve:
    """Per-query argmax of true utility, swept over the grid."""
    return build_curve(grid, oracle_points(test, grid), norm)


def random_point(test: RoutingDataset) -> ParetoPoint:
    """Analytic expectation of uniform-random selection."""
    if len(test) == 0:
        raise ValueError("test set must be nonempty")
    return ParetoPoint(
        cost=float(test.cost_matrix.mean()), score=float(test.score_matrix.mean())
    )


def random_curve(test: RoutingDataset, norm: EvalNorm) -> ParetoCurve:
    point = random_point(test)
    return build_curve((0.0,), [point], norm)


# ---------------------------------------------------------------------------
# Selection protocol


def _preset_lams(benchmark_c_max: float) -> dict[str, float]:
    return {p: resolve_preset(p, benchmark_c_max) for p in PRESET_ORDER}


def selection_eval(
    router_per_preset, test: RoutingDataset, benchmark_c_max: float
) -> SelectionReport:
    """Mean utility at each preset plus the three-preset average.

    ``router_per_preset`` is either a mapping {preset: router} (one trained
    selection router per preset) or a single router reused for all three.
    """
    if len(test) == 0:
        raise ValueError("test set must be nonempty")
    lams = _preset_lams(benchmark_c_max)
    per_preset: dict[str, float] = {}
    histograms: dict[str, dict[str, int]] = {}
    for preset, lam in lams.items():
        router = (
            router_per_preset[preset]
            if isinstance(router_per_preset, dict)
            else router_per_preset
        )
        total = 0.0
        counts: dict[str, int] = {}
        for record in test.records:
            chosen = select_model(router, record.embedding, lam)
            outcome = record.outcomes[chosen]
            total += utility(outcome.score, outcome.cost, lam)
            counts[chosen] = counts.get(chosen, 0) + 1
        per_preset[preset] = total / len(test)
        histograms[preset] = counts
    average = sum(per_preset.values()) / len(per_preset)
    return SelectionReport(
        per_preset=per_preset, average=average, histograms=histograms
    )


def oracle_selection_report(
    test: RoutingDataset, benchmark_c_max: float
) -> SelectionReport:
    """Selection-protocol upper reference: per-query argmax of true utility."""
    S, C = test.score_matrix, test.cost_matrix
    names = test.catalog.names
    per_preset: dict[str, float] = {}
    histograms: dict[str, dict[str, int]] = {}
    for preset, lam in _preset_lams(benchmark_c_max).items():
        total = 0.0
        counts: dict[str, int] = {}
        for i in range(S.shape[0]):
            best = argmax_utility_index(S[i], C[i], lam)
            total += S[i, best] - lam * C[i, best]
            counts[names[best]] = counts.get(names[best], 0) + 1
        per_preset[preset] = total / S.shape[0]
        histograms[preset] = counts
    average = sum(per_preset.values()) / len(per_preset)
    return SelectionReport(
        per_preset=per_preset, average=average, histograms=histograms
    )


def random_selection_report(
    test: RoutingDataset, benchmark_c_max: float
) -> SelectionReport:
    """Selection-protocol lower reference: expectation over uniform choice."""
    mean_score = float(test.score_matrix.mean())
    mean_cost = float(test.cost_matrix.mean())
    per_preset = {
        preset: mean_score - lam * mean_cost
        for preset, lam in _preset_lams(benchmark_c_max).items()
    }
    average = sum(per_preset.values()) / len(per_preset)
    return SelectionReport(per_preset=per_preset, average=average, histograms={})


# ---------------------------------------------------------------------------
# Report emission

REFERENCE_ROWS = ("oracle", "random")


def _order_rows(rows: dict) -> list[str]:
    names = [r for r in REFERENCE_ROWS if r in rows]
    names += sorted(r for r in rows if r not in REFERENCE_ROWS)
    return names


def render_table(title: str, rows: dict[str, dict[str, float]]) -> str:
    """Routers x datasets text table, oracle and random rows first."""
    datasets = sorted({d for row in rows.values() for d in row})
    name_width = max([len(r) for r in rows] + [6])
    header = "router".ljust(name_width) + "".join(
        f"  {d:>12}" for d in datasets
    )
    lines = [title, "=" * len(header), header, "-" * len(header)]
    for name in _order_rows(rows):
        cells = "".join(
            f"  {rows[name][d]:>12.4f}" if d in rows[name] else f"  {'-':>12}"
            for d in datasets
        )
        lines.append(name.ljust(name_width) + cells)
    lines.append("")
    return "\n".join(lines)


def emit_report(
    curves: dict[str, dict[str, ParetoCurve]],
    reports: dict[str, dict[str, SelectionReport]],
    out_dir,
    config_hash: str = "",
    seed: int | None = None,
) -> dict[str, Path]:
    """Write the machine-readable results file and the human-readable table.

    ``curves`` maps dataset -> router label -> ParetoCurve (utility
    protocol); ``reports`` is the analogous selection-protocol mapping.
    Reruns with the same inputs produce byte-identical files.
    """
    if not curves and not reports:
        raise ValueError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": 1,
        "config_hash": config_hash,
        "seed": seed,
        "auc": {
            dataset: {label: curve.to_jsonable() for label, curve in row.items()}
            for dataset, row in curves.items()
        },
        "selection": {
            dataset: {label: report.to_jsonable() for label, report in row.items()}
            for dataset, row in reports.items()
        },
    }
    results_path = out_dir / "results.json"
    results_path.write_bytes(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    )

    sections = []
    if curves:
        auc_rows: dict[str, dict[str, float]] = {}
        for dataset, row in curves.items():
            for label, curve in row.items():
                auc_rows.setdefault(label, {})[dataset] = curve.auc
        sections.append(render_table("Pareto hull AUC (max 100)", auc_rows))
    if reports:
        sel_rows: dict[str, dict[str, float]] = {}
        for dataset, row in reports.items():
            for label, report in row.items():
                sel_rows.setdefault(label, {})[dataset] = report.average
        sections.append(
            render_table("Mean utility, averaged over presets", sel_rows)
        )
    footer = f"config_hash: {config_hash}\nseed: {seed}\n"
    table_path = out_dir / "report.txt"
    table_path.write_text("\n".join(sections) + footer, encoding="utf-8")
    return {"results": results_path, "table": table_path}
