"""REST surface: a FastAPI app over a running Platform.

Every module error carries a stable code that maps deterministically onto
an HTTP status (validation 400, not-found 404, conflict/state-conflict 409,
capacity 422, integrity/internal 500).  The event stream is server-sent
events with replay from ``?since=seq``.
"""

from __future__ import annotations

import json
import logging
import queue
from pathlib import Path

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .errors import HTTP_STATUS_BY_CODE, NotFoundError, PlatformError, ValidationError
from .platform import PLATFORM_VERSION, Platform

logger = logging.getLogger(__name__)

OPEN_PATHS = {"/v1/healthz", "/v1/openapi.json"}


def error_response(exc: PlatformError) -> JSONResponse:
    status = HTTP_STATUS_BY_CODE.get(exc.code, 500)
    return JSONResponse(status_code=status, content={
        "error": {"code": exc.code, "message": exc.message, "detail": exc.detail},
    })


def create_app(platform: Platform, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="modelforge", version=PLATFORM_VERSION,
                  openapi_url="/v1/openapi.json", docs_url=None, redoc_url=None)

    @app.exception_handler(PlatformError)
    async def _platform_error(_request: Request, exc: PlatformError):
        return error_response(exc)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        token = platform.config.token
        path = request.url.path
        if (token and path not in OPEN_PATHS
                and (path.startswith("/v1") or path.startswith("/store"))):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse(status_code=401, content={
                    "error": {"code": "unauthorized",
                              "message": "missing or invalid bearer token",
                              "detail": []},
                })
        return await call_next(request)

    # -- health ------------------------------------------------------------

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": PLATFORM_VERSION}

    # -- templates ------------------------------------------------------------

    @app.post("/v1/templates", status_code=201)
    async def publish_template(request: Request):
        data = await request.body()
        if not data:
            raise ValidationError("request body must be template archive bytes")
        ref = platform.publish_template_bytes(data)
        return {"name": ref.name, "version": ref.version, "digest": ref.digest}

    @app.get("/v1/templates")
    def list_templates(prefix: str | None = None):
        entries = platform.store.list_templates(prefix)
        return [{"name": ref.name, "version": ref.version, "digest": ref.digest,
                 "meta": meta} for ref, meta in entries]

    @app.get("/v1/templates/{name}/{version}")
    def get_template(name: str, version: str, download: bool = False):
        ref = platform.store.resolve(name, version)
        if download:
            archive = platform.store.pull(ref)
            return Response(content=archive.data, media_type="application/gzip")
        entries = platform.store.list_templates(name)
        for r, meta in entries:
            if r.version == ref.version:
                return {"name": r.name, "version": r.version, "digest": r.digest,
                        "meta": meta}
        raise NotFoundError(f"template {name}@{version} not found")

    @app.delete("/v1/templates/{name}/{version}")
    def delete_template(name: str, version: str):
        platform.store.delete_template(name, version)
        return {"deleted": f"{name}@{version}"}

    # -- models --------------------------------------------------------------

    @app.post("/v1/models", status_code=201)
    async def create_model(request: Request,
                           idempotency_key: str | None = Header(default=None)):
        doc = await _json_body(request)
        template = doc.get("template")
        if isinstance(template, str):
            name, _, version = template.partition("@")
        elif isinstance(template, dict):
            name, version = template.get("name"), template.get("version")
        else:
            raise ValidationError("body needs a 'template' (\"name@version\")")
        if not name:
            raise ValidationError("template name is required")
        inst = platform.instantiate_model(name, version or None,
                                          doc.get("config") or {},
                                          idempotency_key=idempotency_key)
        return inst.to_dict()

    @app.get("/v1/models")
    def list_models():
        return platform.list_models()

    @app.get("/v1/models/{model_id}")
    def get_model(model_id: str):
        return platform.model_info(model_id)

    @app.delete("/v1/models/{model_id}")
    def delete_model(model_id: str):
        return platform.delete_model(model_id)

    @app.post("/v1/models/{model_id}/train")
    async def train_model(model_id: str, request: Request):
        doc = await _json_body(request, optional=True)
        reason = (doc or {}).get("reason", "manual")
        return platform.trigger_retrain(model_id, reason=reason)

    @app.post("/v1/models/{model_id}/approve")
    def approve_model(model_id: str):
        return platform.approve_model(model_id)

    @app.post("/v1/models/{model_id}/reject")
    def reject_model(model_id: str):
        return platform.reject_model(model_id)

    @app.post("/v1/models/{model_id}/rollback")
    async def rollback_model(model_id: str, request: Request):
        doc = await _json_body(request)
        if "version" not in doc:
            raise ValidationError("body needs a 'version'")
        return platform.rollback_model(model_id, int(doc["version"]))

    @app.post("/v1/models/{model_id}/archive")
    def archive_model(model_id: str):
        return platform.archive_model(model_id)

    @app.post("/v1/models/{model_id}/versions/{version}/archive")
    def archive_version(model_id: str, version: int):
        return platform.archive_version(model_id, version)

    @app.post("/v1/models/{model_id}/infer")
    async def infer(model_id: str, request: Request):
        doc = await _json_body(request)
        if isinstance(doc, list):  # batch: aligned response array
            return [platform.infer(model_id, item) for item in doc]
        return platform.infer(model_id, doc)

    @app.post("/v1/models/{model_id}/feedback")
    async def feedback(model_id: str, request: Request):
        doc = await _json_body(request)
        for field in ("inference_id", "ground_truth"):
            if field not in doc:
                raise ValidationError(f"body needs {field!r}")
        return platform.record_feedback(model_id, doc["inference_id"],
                                        str(doc["ground_truth"]))

    @app.get("/v1/models/{model_id}/metrics")
    def metrics(model_id: str, window: int = 50):
        return platform.model_metrics(model_id, window_size=window)

    @app.get("/v1/models/{model_id}/drift")
    def drift(model_id: str):
        return platform.check_drift(model_id)

    @app.get("/v1/models/{model_id}/status")
    def model_status(model_id: str):
        info = platform.model_info(model_id)
        return {"model_id": model_id, "state": info["state"],
                "serving_version": info["serving_version"],
                "endpoint": info.get("endpoint")}

    # -- events (SSE) -----------------------------------------------------------

    @app.get("/v1/events")
    def events(since: int = Query(default=0), follow: bool = Query(default=False)):
        def stream():
            last = since
            for event in platform.events_since(since):
                last = event.seq
                yield _sse(event.to_dict())
            if not follow:
                return
            sub = platform.subscribe()
            try:
                while True:
                    try:
                        event = sub.get(timeout=1.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if event.seq > last:
                        last = event.seq
                        yield _sse(event.to_dict())
            finally:
                platform.unsubscribe(sub)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- standalone store surface -------------------------------------------------

    @app.get("/store/templates")
    def store_list(prefix: str | None = None):
        return [{"name": ref.name, "version": ref.version, "digest": ref.digest,
                 "meta": meta} for ref, meta in platform.store.list_templates(prefix)]

    @app.get("/store/templates/{name}/{version}")
    def store_pull(name: str, version: str):
        ref = platform.store.resolve(name, version)
        archive = platform.store.pull(ref)
        return Response(content=archive.data, media_type="application/gzip",
                        headers={"X-Template-Digest": archive.digest})

    @app.post("/store/templates", status_code=201)
    async def store_publish(request: Request):
        data = await request.body()
        ref = platform.publish_template_bytes(data)
        return {"name": ref.name, "version": ref.version, "digest": ref.digest}

    @app.delete("/store/templates/{name}/{version}")
    def store_delete(name: str, version: str):
        platform.store.delete_template(name, version)
        return {"deleted": f"{name}@{version}"}

    # -- dashboard bundle ----------------------------------------------------------

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _sse(doc: dict) -> str:
    return f"id: {doc['seq']}\ndata: {json.dumps(doc, sort_keys=True)}\n\n"


async def _json_body(request: Request, optional: bool = False):
    raw = await request.body()
    if not raw:
        if optional:
            return None
        raise ValidationError("request body must be JSON")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON body: {exc}") from exc
