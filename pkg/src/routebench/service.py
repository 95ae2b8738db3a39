"""Long-running routing endpoint with atomic hot reload.

The service loads a serialized router and answers ``POST /route`` requests
with the chosen model (plus predictions when the router makes them) and
``GET /health`` with readiness metadata. Every request reads one immutable
snapshot captured at request start; :meth:`RouterService.reload` validates
the new file first and then swaps the snapshot in a single assignment, so
concurrent requests always see exactly one coherent router version.

Requests carry a precomputed embedding (or a record id when the service
was started with a dataset); extracting embeddings from raw prompts is the
job of the external embedder tool.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .core import PRESET_WEIGHTS, RoutingDataset
from .routers.base import ContractError, FittedRouter, load_router, router_version

logger = logging.getLogger(__name__)

DEFAULT_PRESET = "balanced"


class ServiceError(Exception):
    """Request-level failure with an HTTP status and machine-readable code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass(frozen=True)
class _Snapshot:
    router: FittedRouter
    version: str
    dataset: RoutingDataset | None


class RouterService:
    """Loads a router once and answers routing queries against snapshots."""

    def __init__(self, router_path, dataset: RoutingDataset | None = None) -> None:
        self._lock = threading.Lock()  # serializes reloads, not requests
        self._snapshot = self._load(router_path, dataset)

    @staticmethod
    def _load(router_path, dataset) -> _Snapshot:
        router = load_router(router_path)
        if dataset is not None and dataset.dim != router.dim:
            raise ValueError(
                f"dataset dim {dataset.dim} does not match router dim {router.dim}"
            )
        return _Snapshot(
            router=router, version=router_version(router_path), dataset=dataset
        )

    @property
    def snapshot(self) -> _Snapshot:
        return self._snapshot

    @property
    def version(self) -> str:
        return self._snapshot.version

    @property
    def dim(self) -> int:
        return self._snapshot.router.dim

    def reload(self, router_path) -> str:
        """Atomically swap in a new router file; returns the new version.

        An invalid or dimension-incompatible file leaves the old router in
        place and raises; in-flight requests keep the snapshot they started
        with either way.
        """
        with self._lock:
            current = self._snapshot
            try:
                candidate = self._load(router_path, current.dataset)
                if candidate.router.dim != current.router.dim:
                    raise ValueError(
                        f"new router dim {candidate.router.dim} is incompatible "
                        f"with served dim {current.router.dim}"
                    )
            except Exception:
                logger.exception("reload rejected; keeping version %s", current.version)
                raise
            self._snapshot = candidate
            return candidate.version

    # -- request handling --------------------------------------------------

    def handle_health(self) -> dict:
        snap = self._snapshot
        return {
            "ready": True,
            "router_version": snap.version,
            "dim": snap.router.dim,
        }

    def handle_route(self, body: dict) -> dict:
        snap = self._snapshot  # one coherent version for the whole request
        router = snap.router

        has_embedding = "embedding" in body
        has_record = "record_id" in body
        if has_embedding == has_record:
            raise ServiceError(
                400,
                "bad_request",
                "exactly one of 'embedding' or 'record_id' is required",
            )
        if has_record:
            if snap.dataset is None:
                raise ServiceError(
                    400, "no_dataset", "service was started without a dataset"
                )
            try:
                record = snap.dataset.record_by_id(str(body["record_id"]))
            except KeyError:
                raise ServiceError(
                    404, "unknown_record", f"record {body['record_id']!r} not loaded"
                ) from None
            x = record.embedding
        else:
            try:
                x = np.asarray(body["embedding"], dtype=np.float64)
            except (TypeError, ValueError):
                raise ServiceError(
                    400, "bad_request", "'embedding' must be an array of numbers"
                ) from None
            if x.ndim != 1 or not np.all(np.isfinite(x)):
                raise ServiceError(
                    400, "bad_request", "'embedding' must be a finite 1-D array"
                )
            if x.shape[0] != router.dim:
                raise ServiceError(
                    422,
                    "dimension_mismatch",
                    f"embedding has dim {x.shape[0]}, router expects {router.dim}",
                )

        if "lambda" in body and "preset" in body:
            raise ServiceError(
                400, "bad_request", "give either 'lambda' or 'preset', not both"
            )
        if "lambda" in body:
            try:
                lam = float(body["lambda"])
            except (TypeError, ValueError):
                raise ServiceError(
                    400, "bad_request", "'lambda' must be a number"
                ) from None
            if not (math.isfinite(lam) and lam >= 0):
                raise ServiceError(
                    400, "bad_request", "'lambda' must be finite and >= 0"
                )
        else:
            preset = body.get("preset", DEFAULT_PRESET)
            if preset not in PRESET_WEIGHTS:
                raise ServiceError(
                    400,
                    "bad_request",
                    f"unknown preset {preset!r}; valid: {sorted(PRESET_WEIGHTS)}",
                )
            try:
                lam = router.resolve_preference(preset)
            except ContractError as exc:
                raise ServiceError(400, "no_baked_c_max", str(exc)) from None

        try:
            response: dict = {"model": router.select(x, lam)}
            if router.formulation == "utility":
                estimate = router.predict_utility(x)
                i = estimate.models.index(response["model"])
                score = float(estimate.scores[i])
                cost = float(estimate.costs[i])
                response["predicted_score"] = score
                response["predicted_cost"] = cost
                response["utility"] = score - lam * cost
        except ContractError as exc:
            raise ServiceError(400, "preference_mismatch", str(exc)) from None
        except ValueError as exc:
            raise ServiceError(422, "dimension_mismatch", str(exc)) from None
        response["router_version"] = snap.version
        return response


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "routebench"
    sys_version = ""

    def log_message(self, fmt, *args):  # route access logs through logging
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode(
            "utf-8"
        )
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _send_error_json(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": {"code": code, "message": message}})

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        try:
            if self.path == "/health":
                self._send_json(200, self.server.service.handle_health())
            else:
                self._send_error_json(404, "not_found", f"no route {self.path!r}")
        except Exception as exc:  # never crash the process
            logger.exception("GET %s failed", self.path)
            self._send_error_json(500, "internal_error", str(exc))

    def do_POST(self) -> None:  # noqa: N802
        try:
            if self.path != "/route":
                self._send_error_json(404, "not_found", f"no route {self.path!r}")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                if not isinstance(body, dict):
                    raise ValueError("body must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._send_error_json(400, "bad_request", f"invalid JSON body: {exc}")
                return
            try:
                self._send_json(200, self.server.service.handle_route(body))
            except ServiceError as exc:
                self._send_error_json(exc.status, exc.code, exc.message)
        except Exception as exc:
            logger.exception("POST %s failed", self.path)
            try:
                self._send_error_json(500, "internal_error", str(exc))
            except Exception:
                pass


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: RouterService) -> None:
        super().__init__(address, _Handler)
        self.service = service


class ServiceHandle:
    """A running service plus its server; use as a context manager in tests."""

    def __init__(self, server: _Server, thread: threading.Thread) -> None:
        self._server = server
        self._thread = thread

    @property
    def service(self) -> RouterService:
        return self._server.service

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def reload(self, router_path) -> str:
        return self.service.reload(router_path)

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=10)

    def __enter__(self) -> "ServiceHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def start_service(
    router_path,
    dataset: RoutingDataset | None = None,
    bind: tuple[str, int] = ("127.0.0.1", 0),
) -> ServiceHandle:
    """Start the service on a background thread; returns a handle."""
    service = RouterService(router_path, dataset=dataset)
    server = _Server(bind, service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return ServiceHandle(server, thread)


def serve(router_path, dataset: RoutingDataset | None = None,
          bind: tuple[str, int] = ("127.0.0.1", 8080)) -> None:
    """Run the service in the foreground until interrupted."""
    service = RouterService(router_path, dataset=dataset)
    server = _Server(bind, service)
    host, port = server.server_address[:2]
    logger.info("serving router version %s on %s:%s", service.version, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
