"""Serve routing decisions over HTTP and hot-swap the router underneath.

Run with: python demos/04_serving_and_hot_reload.py
"""

import http.client
import json
import tempfile
from pathlib import Path

from routebench import RouterConfig, SplitSpec, split_dataset
from routebench.analysis import SyntheticConfig, generate_synthetic
from routebench.routers import fit_knn, save_router
from routebench.service import start_service

workdir = Path(tempfile.mkdtemp(prefix="routebench-demo-"))
dataset = generate_synthetic(
    SyntheticConfig(latent_dim=2, ambient_dim=8, n_models=3, n_queries=300, seed=1)
)
split = split_dataset(dataset, SplitSpec(seed=0))

narrow = workdir / "router_k1.json"
wide = workdir / "router_k50.json"
save_router(fit_knn(split.train, RouterConfig(k=1)), narrow)
save_router(fit_knn(split.train, RouterConfig(k=50)), wide)


def call(address, method, path, body=None):
    conn = http.client.HTTPConnection(*address, timeout=10)
    payload = None if body is None else json.dumps(body)
    conn.request(method, path, body=payload,
                 headers={"Content-Type": "application/json"} if payload else {})
    response = json.loads(conn.getresponse().read())
    conn.close()
    return response


with start_service(narrow, dataset=dataset) as handle:
    print("service listening on", handle.url)
    health = call(handle.address, "GET", "/health")
    print("health:", health)

    query = split.test.records[0]
    body = {"embedding": query.embedding.tolist(), "preset": "balanced"}
    before = call(handle.address, "POST", "/route", body)
    print("\nrouted with k=1 router: ", before)

    # requests can also reference a loaded record by id
    by_id = call(handle.address, "POST", "/route",
                 {"record_id": query.id, "lambda": 0.25})
    print("routed by record_id:    ", by_id)

    new_version = handle.reload(wide)
    print("\nreloaded atomically; new version", new_version[:12])
    after = call(handle.address, "POST", "/route", body)
    print("routed with k=50 router:", after)
    print("\nversions differ:", before["router_version"] != after["router_version"])
