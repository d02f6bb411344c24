"""Model serving gateway: per-model endpoints with scale-to-zero.

Endpoints hold an immutable loaded-model record that is swapped atomically
under a per-model lock, so concurrent inference never observes a mixed
version.  Idle endpoints unload their model object (artifact key retained)
and transparently reload on the next request; predictions are identical
across unload/reload cycles because prediction is a pure function of the
artifact bytes and the request.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from . import models
from .connectors import parse_rfc3339
from .errors import (
    CapacityError,
    NotFoundError,
    PlatformError,
    StateConflictError,
    ValidationError,
)
from .store import ArtifactKey, Store
from .template import InputFieldSpec, TemplateManifest

logger = logging.getLogger(__name__)

STATUS_LOADED = "Loaded"
STATUS_IDLE_UNLOADED = "Idle-Unloaded"
STATUS_UNAVAILABLE = "Unavailable"

DEFAULT_IDLE_TIMEOUT_S = 300.0
DEFAULT_MAX_IN_FLIGHT = 64
DEFAULT_QUEUE_TIMEOUT_S = 30.0
INFERENCE_LOG_SIZE = 10_000


@dataclass(frozen=True)
class _Loaded:
    """Immutable (version, model object) pair; swapped as one reference."""

    version: int
    model: object


@dataclass
class InferenceRecord:
    inference_id: str
    serve_seq: int
    at: float
    request: dict
    output: dict
    model_version: int
    predicted_label: str | None


@dataclass
class Endpoint:
    model_id: str
    artifact: ArtifactKey
    manifest: TemplateManifest
    idle_timeout_s: float
    loaded: _Loaded | None = None
    status: str = STATUS_IDLE_UNLOADED
    target_version: int = 0
    last_request_at: float = 0.0
    unavailable_cause: str | None = None
    load_count: int = 0
    unload_count: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    in_flight: int = 0
    drained: threading.Condition = None  # type: ignore[assignment]
    serve_counter: int = 0
    log: deque = field(default_factory=lambda: deque(maxlen=INFERENCE_LOG_SIZE))
    gate: threading.Semaphore = None  # type: ignore[assignment]

    def __post_init__(self):
        self.drained = threading.Condition(self.lock)
        if self.gate is None:
            self.gate = threading.Semaphore(DEFAULT_MAX_IN_FLIGHT)

    @property
    def loaded_version(self) -> int:
        return self.loaded.version if self.loaded else self.target_version

    def status_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "status": self.status,
            "loaded_version": self.loaded_version,
            "last_request_at": self.last_request_at,
            "idle_timeout_s": self.idle_timeout_s,
            "load_count": self.load_count,
            "unload_count": self.unload_count,
            "unavailable_cause": self.unavailable_cause,
        }


def _coerce_request_value(spec: InputFieldSpec, value) -> object:
    if spec.kind == "numeric":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ValidationError(f"field {spec.name!r} must be numeric")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"field {spec.name!r} must be numeric") from None
    if spec.kind == "timestamp":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            return parse_rfc3339(value)
        raise ValidationError(f"field {spec.name!r} must be a timestamp")
    if not isinstance(value, (str, int, float, bool)):
        raise ValidationError(f"field {spec.name!r} must be a scalar")
    return value


class Gateway:
    """Loads trained artifacts and serves inference with atomic version swaps."""

    def __init__(self, store: Store, clock, *,
                 idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 queue_timeout_s: float = DEFAULT_QUEUE_TIMEOUT_S):
        self.store = store
        self.clock = clock
        self.idle_timeout_s = idle_timeout_s
        self.max_in_flight = max_in_flight
        self.queue_timeout_s = queue_timeout_s
        self._endpoints: dict[str, Endpoint] = {}
        self._registry_lock = threading.Lock()
        self._inference_counter = itertools.count(1)

    # -- deployment ---------------------------------------------------------

    def deploy(self, model_id: str, version: int, artifact: ArtifactKey,
               manifest: TemplateManifest,
               idle_timeout_s: float | None = None) -> Endpoint:
        """Load an artifact and swap it in; prior version drains then releases."""
        try:
            data = self.store.get_artifact(artifact)
            model = models.deserialize_model(data)
        except PlatformError as exc:
            ep = self._ensure_endpoint(model_id, artifact, manifest, idle_timeout_s)
            with ep.lock:
                ep.status = STATUS_UNAVAILABLE
                ep.unavailable_cause = str(exc)
                ep.loaded = None
            logger.error("deploy %s v%d failed: %s", model_id, version, exc)
            raise

        ep = self._ensure_endpoint(model_id, artifact, manifest, idle_timeout_s)
        with ep.lock:
            # atomic pointer swap: in-flight requests keep the old immutable
            # record and finish on it; the old model releases with its last
            # reference
            ep.loaded = _Loaded(version=version, model=model)
            ep.target_version = version
            ep.artifact = artifact
            ep.status = STATUS_LOADED
            ep.unavailable_cause = None
            ep.load_count += 1
            ep.last_request_at = self.clock.now()
        logger.info("deployed %s v%d (%s)", model_id, version, artifact.key)
        return ep

    def _ensure_endpoint(self, model_id: str, artifact: ArtifactKey,
                         manifest: TemplateManifest,
                         idle_timeout_s: float | None) -> Endpoint:
        with self._registry_lock:
            ep = self._endpoints.get(model_id)
            if ep is None:
                ep = Endpoint(
                    model_id=model_id, artifact=artifact, manifest=manifest,
                    idle_timeout_s=idle_timeout_s if idle_timeout_s is not None
                    else self.idle_timeout_s,
                    gate=threading.Semaphore(self.max_in_flight),
                )
                self._endpoints[model_id] = ep
            else:
                ep.manifest = manifest
            return ep

    def restore(self, model_id: str, version: int, artifact: ArtifactKey,
                manifest: TemplateManifest,
                idle_timeout_s: float | None = None) -> Endpoint:
        """Recreate an endpoint after restart without loading the model;
        the first request performs the cold start."""
        ep = self._ensure_endpoint(model_id, artifact, manifest, idle_timeout_s)
        with ep.lock:
            ep.target_version = version
            ep.artifact = artifact
            if ep.loaded is None:
                ep.status = STATUS_IDLE_UNLOADED
        return ep

    def endpoint(self, model_id: str) -> Endpoint:
        with self._registry_lock:
            ep = self._endpoints.get(model_id)
        if ep is None:
            raise NotFoundError(f"model {model_id} has no serving endpoint")
        return ep

    def has_endpoint(self, model_id: str) -> bool:
        with self._registry_lock:
            return model_id in self._endpoints

    def undeploy(self, model_id: str, drain_timeout_s: float = 10.0) -> None:
        """Drain in-flight requests (bounded), then remove the endpoint."""
        with self._registry_lock:
            ep = self._endpoints.get(model_id)
        if ep is None:
            raise NotFoundError(f"model {model_id} has no serving endpoint")
        deadline = time.monotonic() + drain_timeout_s
        with ep.lock:
            while ep.in_flight > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    logger.warning("undeploy %s: drain timed out with %d in flight",
                                   model_id, ep.in_flight)
                    break
                ep.drained.wait(timeout=remaining)
            ep.loaded = None
            ep.status = STATUS_UNAVAILABLE
        with self._registry_lock:
            self._endpoints.pop(model_id, None)
        logger.info("undeployed %s", model_id)

    # -- scale to zero -------------------------------------------------------

    def idle_sweep(self, now: float | None = None) -> list[str]:
        """Unload every Loaded endpoint idle longer than its timeout."""
        now = self.clock.now() if now is None else now
        with self._registry_lock:
            endpoints = list(self._endpoints.values())
        unloaded = []
        for ep in endpoints:
            with ep.lock:
                if (ep.status == STATUS_LOADED and ep.in_flight == 0
                        and now - ep.last_request_at > ep.idle_timeout_s):
                    ep.loaded = None
                    ep.status = STATUS_IDLE_UNLOADED
                    ep.unload_count += 1
                    unloaded.append(ep.model_id)
        if unloaded:
            logger.info("idle sweep unloaded: %s", ", ".join(unloaded))
        return unloaded

    def _reload_locked(self, ep: Endpoint) -> None:
        data = self.store.get_artifact(ep.artifact)
        model = models.deserialize_model(data)
        ep.loaded = _Loaded(version=ep.target_version, model=model)
        ep.status = STATUS_LOADED
        ep.load_count += 1

    # -- inference ------------------------------------------------------------

    def _validate_request(self, manifest: TemplateManifest, request: dict) -> dict:
        if not isinstance(request, dict):
            raise ValidationError("inference request must be a JSON object")
        known = {i.name: i for i in manifest.inputs}
        bad = sorted(set(request) - set(known))
        if bad:
            raise ValidationError(
                f"unknown request field(s): {', '.join(bad)}",
                detail=[{"field": b, "error": "unknown"} for b in bad],
            )
        missing = sorted(i.name for i in manifest.inputs
                         if i.required and i.name not in request)
        if missing:
            raise ValidationError(
                f"missing required field(s): {', '.join(missing)}",
                detail=[{"field": m, "error": "missing"} for m in missing],
            )
        return {name: _coerce_request_value(known[name], value)
                for name, value in request.items()}

    def _predict(self, model, manifest: TemplateManifest,
                 request: dict) -> tuple[dict, str | None]:
        if isinstance(model, models.NBModel):
            text = " ".join(str(request.get(f, "")) for f in model.text_fields)
            label, _ = models.nb_predict(model, text)
            probs = models.nb_probabilities(model, text)
            return {"label": label, "scores": probs}, label
        if isinstance(model, models.LRModel):
            record = {k: str(v) for k, v in request.items()}
            score, decision = models.logreg_predict_record(model, record)
            return {"decision": decision, "score": score}, decision
        if isinstance(model, models.MajorityModel):
            return {"label": model.label, "scores": {model.label: 1.0}}, model.label
        if isinstance(model, models.TfidfIndex):
            text = str(request.get(model.text_field, ""))
            defaults = model.query_defaults or {}
            status_filter = defaults.get("status_filter")
            window_days = defaults.get("window_days")
            top_k = int(defaults.get("top_k") or 5)
            as_of = request.get("as_of")
            window = None
            if window_days:
                anchor = float(as_of) if as_of is not None else self.clock.now()
                window = (anchor, int(window_days))
            results = models.tfidf_query(model, text, top_k,
                                         status_filter=status_filter, window=window)
            return {"results": [{"id": i, "score": s} for i, s in results]}, None
        raise ValidationError(f"unsupported model family {type(model).__name__}")

    def infer(self, model_id: str, request: dict) -> dict:
        """Serve one inference; reloads idle endpoints transparently."""
        ep = self.endpoint(model_id)
        if not ep.gate.acquire(timeout=self.queue_timeout_s):
            raise CapacityError(f"model {model_id}: inference queue timed out")
        try:
            with ep.lock:
                if ep.status == STATUS_UNAVAILABLE:
                    raise StateConflictError(
                        f"model {model_id} endpoint unavailable: {ep.unavailable_cause}"
                    )
                if ep.loaded is None:
                    self._reload_locked(ep)  # synchronous cold start
                loaded = ep.loaded
                ep.serve_counter += 1
                serve_seq = ep.serve_counter
                ep.last_request_at = self.clock.now()
                ep.in_flight += 1
            try:
                validated = self._validate_request(ep.manifest, request)
                output, label = self._predict(loaded.model, ep.manifest, validated)
            finally:
                with ep.lock:
                    ep.in_flight -= 1
                    ep.drained.notify_all()

            inference_id = f"inf-{next(self._inference_counter):08d}"
            served_at = self.clock.now()
            record = InferenceRecord(
                inference_id=inference_id, serve_seq=serve_seq, at=served_at,
                request=dict(request), output=output,
                model_version=loaded.version,
                predicted_label=str(label) if label is not None else None,
            )
            with ep.lock:
                ep.log.append(record)
            return {
                "inference_id": inference_id,
                "model_version": loaded.version,
                "served_at": served_at,
                "output": output,
            }
        finally:
            ep.gate.release()

    # -- monitor access --------------------------------------------------------

    def inference_window(self, model_id: str, limit: int | None = None) -> list[InferenceRecord]:
        ep = self.endpoint(model_id)
        with ep.lock:
            records = list(ep.log)
        return records[-limit:] if limit else records

    def find_inference(self, model_id: str, inference_id: str) -> InferenceRecord | None:
        ep = self.endpoint(model_id)
        with ep.lock:
            for record in ep.log:
                if record.inference_id == inference_id:
                    return record
        return None

    def endpoints_status(self) -> list[dict]:
        with self._registry_lock:
            return [ep.status_dict() for ep in self._endpoints.values()]
