"""HTTP delivery: the JSON API consumed by the pivot UI, plus access monitoring.

Each request runs against the manifest snapshot current at its start; the
service never writes to the warehouse (loads are CLI-only). Responses are
byte-identical for the same manifest version and request: JSON is serialized
with a fixed canonical encoder and report timestamps come from the manifest.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from time import perf_counter

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from .access_log import AccessLog, request_digest
from .errors import CdwError, InvalidSpec
from .olap import CubeEngine
from .reports import run_report
from .schema import parse_rfc3339
from .warehouse import Warehouse, latest_manifest_version

_STATUS = {
    "UnknownCube": 404, "UnknownMember": 404, "UnknownLevel": 404,
    "UnknownCancerType": 404, "UnknownDrug": 404, "MissingFile": 500,
    "IoFailure": 500, "CorruptTable": 500, "CorruptWarehouse": 500,
    "WarehouseLocked": 503,
}


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


class SnapshotProvider:
    """Hands out a CubeEngine for the latest committed manifest version."""

    def __init__(self, warehouse_path: Path):
        self.path = Path(warehouse_path)
        self._lock = threading.Lock()
        self._engine: CubeEngine | None = None
        self._version: int | None = None

    def engine(self) -> CubeEngine:
        latest = latest_manifest_version(self.path)
        with self._lock:
            if self._engine is None or latest != self._version:
                old = self._engine
                self._engine = CubeEngine(Warehouse.open(self.path))
                self._version = latest
                if old is not None:
                    old.warehouse.close()
            return self._engine


def create_app(
    warehouse_path: Path | str,
    assets_path: Path | str | None = None,
    access_log_path: Path | str | None = None,
    cors_origins: list[str] | None = None,
) -> FastAPI:
    warehouse_path = Path(warehouse_path)
    provider = SnapshotProvider(warehouse_path)
    provider.engine()  # fail fast on a corrupt or missing warehouse
    log = AccessLog(access_log_path or warehouse_path / "access.log.ndjson")

    app = FastAPI(title="cdw", docs_url=None, redoc_url=None, openapi_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def respond(request: Request, operation: str, payload, compute) -> Response:
        actor = request.headers.get("x-actor", "anonymous")
        digest = request_digest(request.method, request.url.path, payload)
        started = perf_counter()
        try:
            body = _dumps(compute())
        except CdwError as exc:
            duration = (perf_counter() - started) * 1000
            log.append(actor, operation, digest, duration, f"error:{exc.code}")
            return Response(
                _dumps({"code": exc.code, "message": exc.message}),
                status_code=_STATUS.get(exc.code, 400),
                media_type="application/json",
            )
        duration = (perf_counter() - started) * 1000
        log.append(actor, operation, digest, duration, "ok")
        return Response(body, media_type="application/json")

    async def read_json(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise InvalidSpec("request body is not valid JSON")
        if not isinstance(payload, dict):
            raise InvalidSpec("request body must be a JSON object")
        return payload

    @app.get("/api/catalog")
    async def get_catalog(request: Request):
        def compute():
            engine = provider.engine()
            return {**engine.catalog(), "manifest_version": engine.warehouse.version}
        return respond(request, "catalog", None, compute)

    @app.post("/api/query")
    async def post_query(request: Request):
        try:
            payload = await read_json(request)
        except InvalidSpec as exc:
            return respond(request, "query", None, _raiser(exc))
        return respond(request, "query", payload,
                       lambda: provider.engine().query(payload).to_dict())

    @app.post("/api/drill")
    async def post_drill(request: Request):
        try:
            payload = await read_json(request)
        except InvalidSpec as exc:
            return respond(request, "drill", None, _raiser(exc))

        def compute():
            for key in ("spec", "axis", "member_path"):
                if key not in payload:
                    raise InvalidSpec(f"drill request missing {key!r}")
            return provider.engine().drill_down(
                payload["spec"], payload["axis"], payload["member_path"],
                payload.get("dimension"),
            ).to_dict()
        return respond(request, "drill", payload, compute)

    @app.get("/api/reports/{report_id}")
    async def get_report(request: Request, report_id: str):
        params = dict(request.query_params)
        return respond(
            request, "report", {"report_id": report_id, **params},
            lambda: run_report(provider.engine(), report_id, params).to_dict(),
        )

    @app.get("/api/access-log")
    async def get_access_log(request: Request):
        params = dict(request.query_params)
        try:
            start = parse_rfc3339(params["from"]) if "from" in params else None
            end = parse_rfc3339(params["to"]) if "to" in params else None
        except ValueError:
            return Response(
                _dumps({"code": "InvalidSpec",
                        "message": "from/to must be RFC 3339 timestamps"}),
                status_code=400, media_type="application/json")
        entries = log.read(actor=params.get("actor"), start=start, end=end)
        return Response(_dumps({"entries": [e.to_dict() for e in entries]}),
                        media_type="application/json")

    if assets_path is not None:
        app.mount("/", StaticFiles(directory=str(assets_path), html=True), name="ui")

    return app


def _raiser(exc: CdwError):
    def compute():
        raise exc
    return compute
