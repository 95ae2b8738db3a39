"""Utility algebra basics: catalogs, pricing, cost, and preference presets.

Run with: python demos/01_utility_and_routing_basics.py
"""

import numpy as np

from routebench import (
    ModelCatalog,
    Pricing,
    UtilityEstimate,
    argmax_utility,
    compute_cost,
    resolve_preset,
    utility,
)

# A catalog is the ordered universe of candidate models. Order matters:
# it is the deterministic tie-break order everywhere downstream.
catalog = ModelCatalog.from_pairs(
    [
        ("gpt-4", Pricing(input_price=30.0, output_price=60.0)),
        ("claude-3-haiku", Pricing(input_price=0.25, output_price=1.25)),
        ("mistral-7b", Pricing(input_price=0.25, output_price=0.25)),
    ]
)
print("catalog:", ", ".join(catalog.names))

# Costs follow from token counts and per-million-token prices.
for name, _ in catalog:
    cost = compute_cost(1500, 500, catalog.pricing(name))
    print(f"  1500 in / 500 out on {name}: ${cost:.6f}")

# The scalar every router maximizes is utility = score - lam * cost.
print("\nutility(score=0.8, cost=0.2, lam=1.0) =", utility(0.8, 0.2, 1.0))

# Named presets resolve lam against the benchmark's maximum cost, so the
# same preference means the same thing on cheap and expensive benchmarks.
c_max = 0.09  # pretend the priciest call in this benchmark cost 9 cents
for preset in ("low_cost", "balanced", "high_performance"):
    print(f"  {preset:17s} -> lam = {resolve_preset(preset, c_max):.3f}")

# Given per-model predictions, routing is an argmax with cost-conservative
# tie-breaking (lower predicted cost first, then catalog order).
estimate = UtilityEstimate(
    models=catalog.names,
    scores=np.array([0.92, 0.85, 0.78]),
    costs=np.array([0.09, 0.004, 0.001]),
)
print("\npredicted estimates:", estimate.as_dict())
for lam in (0.0, 1.0, 10.0):
    print(f"  chosen at lam={lam:5.1f}: {argmax_utility(estimate, lam)}")
