"""Platform runtime: wires store, connectors, executor, gateway, and
monitors around the controller's event loop.

All state mutations flow through one consumer thread folding events into the
journal (single-writer rule); connectors, training runs, and inference all
run concurrently and talk to the controller only by emitting events.
Commands (the REST surface) validate against a state snapshot, emit an
event, and wait for it to fold before returning.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import controller as ctl
from .clock import Clock, Scheduler, TimerHandle, VirtualClock
from .connectors import ConnectorSpec, SelectField, fetch, load_snapshot, persist_snapshot
from .errors import (
    CapacityError,
    ConflictError,
    NotFoundError,
    StateConflictError,
    ValidationError,
)
from .executor import (
    RUN_CANCELLED,
    RUN_SUCCEEDED,
    ExecutorService,
    ResourceLimits,
    TrainingRun,
)
from .gateway import Gateway
from .monitors import MonitorService
from .store import ArtifactKey, Store, TemplateRef
from .template import (
    ModelConfig,
    TemplateArchive,
    archive_specs,
    merge_config,
    read_archive,
)

logger = logging.getLogger(__name__)

PLATFORM_VERSION = "0.1.0"


@dataclass
class PlatformConfig:
    data_dir: str = "./modelforge-data"
    host: str = "127.0.0.1"
    port: int = 8765
    token: str | None = None
    capacity_cpu_millis: int = 4000
    capacity_memory_mb: int = 6144
    idle_timeout_s: float = 300.0
    max_concurrent_runs: int = 2
    run_wall_clock_s: float | None = 300.0
    drift_threshold: float = 0.2
    drift_min_window: int = 50
    degrade_threshold: float = 0.6
    degrade_min_labeled: int = 20
    monitor_interval_s: float | None = None
    default_seed: int = 17

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "PlatformConfig":
        """Read modelforge.yaml (if given/present) then apply MF_* env overrides."""
        doc: dict = {}
        if path is not None and Path(path).exists():
            doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
        cfg = cls(**{k: v for k, v in doc.items() if k in cls.__dataclass_fields__})
        env_map = {
            "MF_DATA_DIR": ("data_dir", str),
            "MF_HOST": ("host", str),
            "MF_PORT": ("port", int),
            "MF_TOKEN": ("token", str),
            "MF_CAPACITY_CPU_MILLIS": ("capacity_cpu_millis", int),
            "MF_CAPACITY_MEMORY_MB": ("capacity_memory_mb", int),
            "MF_IDLE_TIMEOUT_S": ("idle_timeout_s", float),
            "MF_MAX_CONCURRENT_RUNS": ("max_concurrent_runs", int),
            "MF_DRIFT_THRESHOLD": ("drift_threshold", float),
        }
        for env, (attr, cast) in env_map.items():
            if os.environ.get(env):
                setattr(cfg, attr, cast(os.environ[env]))
        return cfg


@dataclass
class _Ticket:
    event: ctl.Event
    done: threading.Event = field(default_factory=threading.Event)
    error: Exception | None = None


class Platform:
    """The running platform; one per data directory."""

    def __init__(self, config: PlatformConfig, clock: Clock | None = None):
        self.config = config
        self.clock = clock or Clock()
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

        self.store = Store(self.data_dir / "store")
        self.journal = ctl.Journal(self.data_dir / "state")
        self.state = ctl.replay(self.journal.read_all())
        self.scheduler = Scheduler()

        self._state_lock = threading.RLock()
        self._queue: queue.Queue[_Ticket | None] = queue.Queue()
        self._pending = 0
        self._idle = threading.Condition()
        self._subscribers: list[queue.Queue] = []
        self._spec_cache: dict[str, tuple] = {}
        self._idem_keys: dict[str, str] = {}
        self._run_reasons: dict[str, str] = {}
        self._fetching: set[str] = set()
        self._schedules: dict[str, TimerHandle] = {}
        self._create_lock = threading.Lock()
        self._closed = False

        self.executor = ExecutorService(
            self.store, self.data_dir / "runs",
            max_concurrent_runs=config.max_concurrent_runs,
            on_complete=self._run_completed,
        )
        self.executor.set_run_counter_floor(self.state.run_counter)
        self.gateway = Gateway(self.store, self.clock,
                               idle_timeout_s=config.idle_timeout_s)
        self.monitors = MonitorService(
            self.gateway, self.clock, self.data_dir / "monitoring",
            emit=self._emit_monitor_event,
            is_serving=self._is_serving,
            drift_threshold=config.drift_threshold,
            min_window=config.drift_min_window,
            degrade_threshold=config.degrade_threshold,
            min_labeled=config.degrade_min_labeled,
        )
        self._pool = ThreadPoolExecutor(max_workers=4, thread_name_prefix="platform")
        self._loop_thread = threading.Thread(target=self._loop, name="controller",
                                             daemon=True)
        self._loop_thread.start()

        self._rebuild_runtime()
        if config.monitor_interval_s:
            self.scheduler.call_every(self.clock.now() + config.monitor_interval_s,
                                      config.monitor_interval_s, self._monitor_tick)

    # ------------------------------------------------------------------
    # event plumbing
    # ------------------------------------------------------------------

    def _track(self, n: int = 1) -> None:
        with self._idle:
            self._pending += n
            if self._pending == 0:
                self._idle.notify_all()

    def _emit(self, kind: str, model_id: str | None = None,
              payload: dict | None = None, wait: bool = False) -> ctl.Event:
        event = ctl.Event(kind=kind, model_id=model_id, payload=payload or {},
                          at=self.clock.now())
        ticket = _Ticket(event)
        self._track(1)
        self._queue.put(ticket)
        if wait:
            ticket.done.wait(timeout=60)
            if ticket.error is not None:
                raise ticket.error
        return event

    def _emit_monitor_event(self, kind: str, model_id: str, payload: dict) -> None:
        self._emit(kind, model_id, payload)

    def _loop(self) -> None:
        while True:
            ticket = self._queue.get()
            if ticket is None:
                return
            event = ticket.event
            try:
                with self._state_lock:
                    event.seq = self.state.last_seq + 1
                    self.journal.append(event)
                    actions = ctl.decide(self.state, event)
                    ctl.fold_event(self.state, event)
                self._publish(event)
                for action in actions:
                    self._execute(action, event)
            except Exception as exc:  # keep the loop alive; surface via ticket
                logger.exception("controller loop error on %s", event.kind)
                ticket.error = exc
            finally:
                ticket.done.set()
                self._track(-1)

    def _publish(self, event: ctl.Event) -> None:
        for sub in list(self._subscribers):
            try:
                sub.put_nowait(event)
            except queue.Full:
                pass

    def subscribe(self) -> queue.Queue:
        sub: queue.Queue = queue.Queue(maxsize=1000)
        self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: queue.Queue) -> None:
        if sub in self._subscribers:
            self._subscribers.remove(sub)

    def run_until_idle(self, timeout: float = 60.0) -> bool:
        """Block until no queued events or in-flight background work remain."""
        with self._idle:
            return self._idle.wait_for(lambda: self._pending == 0, timeout=timeout)

    def advance(self, seconds: float) -> None:
        """Virtual-clock helper: step through each due timer in time order,
        letting triggered work settle between ticks, then sweep idle."""
        if not isinstance(self.clock, VirtualClock):
            raise ValidationError("advance() requires a VirtualClock")
        target = self.clock.now() + seconds
        while True:
            due = self.scheduler.next_due()
            if due is None or due > target:
                break
            self.clock.advance_to(max(due, self.clock.now()))
            self.scheduler.fire_due(self.clock.now())
            self.gateway.idle_sweep(self.clock.now())
            self.run_until_idle()
        self.clock.advance_to(target)
        self.gateway.idle_sweep(target)
        self.run_until_idle()

    def tick(self) -> None:
        """Wall-clock helper: fire due timers and sweep idle endpoints."""
        now = self.clock.now()
        self.scheduler.fire_due(now)
        self.gateway.idle_sweep(now)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.run_until_idle(timeout=10)
        self._queue.put(None)
        self._loop_thread.join(timeout=5)
        self.executor.shutdown()
        self._pool.shutdown(wait=False)
        with self._state_lock:
            self.journal.write_snapshot(self.state)

    # ------------------------------------------------------------------
    # action execution
    # ------------------------------------------------------------------

    def _execute(self, action: ctl.Action, cause: ctl.Event) -> None:
        if isinstance(action, ctl.Emit):
            self._emit(action.kind, action.model_id, action.payload)
        elif isinstance(action, ctl.StartFetch):
            self._start_fetch(action)
        elif isinstance(action, ctl.StartRun):
            self._start_run(action)
        elif isinstance(action, ctl.Deploy):
            self._deploy(action.model_id, action.version)
        elif isinstance(action, ctl.Undeploy):
            self._undeploy(action.model_id)
        else:
            logger.warning("unknown action %r", action)

    # -- data acquisition ------------------------------------------------

    def _connector_spec(self, inst: ctl.ModelInstance) -> ConnectorSpec:
        binding = inst.config.connector
        if binding is None:
            raise ValidationError(f"model {inst.model_id} has no data connector")
        manifest, _, _ = self._template_specs(inst)
        select: list[SelectField] = []
        for input_spec in manifest.inputs:
            source = inst.config.inputs.get(input_spec.name)
            if source is not None:
                select.append(SelectField(source, input_spec.name, input_spec.kind))
        if inst.config.label:
            select.append(SelectField(inst.config.label, "label", "categorical"))
        window = None
        if binding.timestamp_field and binding.window_days:
            window = (binding.timestamp_field, binding.window_days)
        return ConnectorSpec(kind=binding.kind, location=binding.location,
                             select=select, row_filter=binding.row_filter,
                             time_window=window, options=binding.options)

    def _start_fetch(self, action: ctl.StartFetch) -> None:
        model_id = action.model_id
        with self._state_lock:
            if model_id in self._fetching:
                logger.info("fetch for %s already in flight; coalescing", model_id)
                return
            self._fetching.add(model_id)
        self._track(1)
        self._pool.submit(self._fetch_job, action)

    def _fetch_job(self, action: ctl.StartFetch) -> None:
        model_id = action.model_id
        try:
            with self._state_lock:
                inst = self.state.model(model_id)
                spec = self._connector_spec(inst)
            as_of = self.clock.now()
            snapshot = fetch(spec, as_of)
            persist_snapshot(self.store, model_id, snapshot)
            self._emit(ctl.DATA_FETCHED, model_id, {
                "digest": snapshot.digest,
                "row_count": snapshot.row_count,
                "rows_rejected": snapshot.rows_rejected,
                "empty": snapshot.empty,
                "purpose": action.purpose,
                "reason": action.reason,
            })
        except Exception as exc:
            logger.warning("fetch for %s failed: %s", model_id, exc)
            self._emit(ctl.TRAINING_FAILED_EVENT, model_id, {
                "phase": "data-acquisition", "error": str(exc),
            })
        finally:
            with self._state_lock:
                self._fetching.discard(model_id)
            self._track(-1)

    # -- training ----------------------------------------------------------

    def _template_specs(self, inst: ctl.ModelInstance):
        cached = self._spec_cache.get(inst.template_digest)
        if cached is None:
            ref = TemplateRef(inst.template_name, inst.template_version,
                              inst.template_digest)
            archive = self.store.pull(ref)
            cached = archive_specs(archive)
            self._spec_cache[inst.template_digest] = cached
        return cached

    def _start_run(self, action: ctl.StartRun) -> None:
        model_id = action.model_id
        try:
            with self._state_lock:
                inst = self.state.model(model_id)
                manifest, pipeline, serving = self._template_specs(inst)
                resolved = merge_config(manifest, inst.config)
            snapshot = load_snapshot(self.store, model_id, action.snapshot_digest)
            run_id = self.executor.next_run_id()
            self._run_reasons[run_id] = action.reason
            self._emit(ctl.TRAINING_STARTED, model_id, {
                "run_id": run_id, "snapshot_digest": action.snapshot_digest,
                "reason": action.reason,
            })
            self._track(1)
            self.executor.submit(
                pipeline, resolved, snapshot,
                ResourceLimits(wall_clock_s=self.config.run_wall_clock_s),
                serving, model_id, run_id=run_id, started_at=self.clock.now(),
            )
        except Exception as exc:
            logger.warning("could not start run for %s: %s", model_id, exc)
            self._emit(ctl.TRAINING_FAILED_EVENT, model_id, {
                "phase": "launch", "error": str(exc),
            })

    def _run_completed(self, run: TrainingRun) -> None:
        try:
            model_id = run.model_id
            reason = self._run_reasons.pop(run.run_id, "manual")
            if run.status == RUN_SUCCEEDED:
                with self._state_lock:
                    inst = self.state.model(model_id)
                    version = inst.next_version()
                assert run.model_artifact is not None
                self._emit(ctl.TRAINING_SUCCEEDED, model_id, {
                    "run_id": run.run_id,
                    "version": version,
                    "artifact": _key_dict(run.model_artifact),
                    "metrics_artifact": _key_dict(run.metrics_artifact),
                    "metrics": run.metrics,
                    "snapshot_digest": run.snapshot_digest,
                    "reason": reason,
                })
            else:
                self._emit(ctl.TRAINING_FAILED_EVENT, model_id, {
                    "run_id": run.run_id,
                    "phase": "training",
                    "status": run.status,
                    "cancelled": run.status == RUN_CANCELLED,
                    "error": run.error or run.status,
                })
        finally:
            self._track(-1)

    # -- serving -------------------------------------------------------------

    def _deploy(self, model_id: str, version: int) -> None:
        try:
            with self._state_lock:
                inst = self.state.model(model_id)
                entry = inst.version_entry(version)
                if entry is None:
                    raise NotFoundError(f"model {model_id} has no version {version}")
                manifest, _, _ = self._template_specs(inst)
                artifact = ArtifactKey(**entry.artifact)
            self.gateway.deploy(model_id, version, artifact, manifest,
                                idle_timeout_s=self.config.idle_timeout_s)
            self._emit(ctl.MODEL_DEPLOYED, model_id, {"version": version})
            self._ensure_retrain_schedule(model_id)
        except Exception as exc:
            # endpoint is Unavailable with cause; no ModelDeployed is emitted
            logger.error("deploy of %s v%d failed: %s", model_id, version, exc)

    def _undeploy(self, model_id: str) -> None:
        self._cancel_retrain_schedule(model_id)
        try:
            self.gateway.undeploy(model_id)
        except NotFoundError:
            pass

    def _is_serving(self, model_id: str) -> bool:
        with self._state_lock:
            inst = self.state.models.get(model_id)
            return inst is not None and inst.state == ctl.SERVING

    # -- schedules ---------------------------------------------------------------

    def _ensure_retrain_schedule(self, model_id: str) -> None:
        with self._state_lock:
            inst = self.state.models.get(model_id)
        if inst is None or not inst.config.retrain_interval_s:
            return
        self._cancel_retrain_schedule(model_id)
        interval = float(inst.config.retrain_interval_s)
        self._schedules[model_id] = self.scheduler.call_every(
            self.clock.now() + interval, interval,
            lambda: self._schedule_tick(model_id),
        )

    def _cancel_retrain_schedule(self, model_id: str) -> None:
        handle = self._schedules.pop(model_id, None)
        if handle is not None:
            handle.cancel()

    def _schedule_tick(self, model_id: str) -> None:
        with self._state_lock:
            inst = self.state.models.get(model_id)
            if inst is None or inst.state != ctl.SERVING:
                return
        self._start_fetch(ctl.StartFetch(model_id, purpose="probe", reason="scheduled"))

    def schedule_fetch(self, model_id: str, interval_s: float) -> TimerHandle:
        """Periodic fetch for a model; rejected without a configured connector."""
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.config.connector is None:
                raise ValidationError(f"model {model_id} has no data connector")
        handle = self.scheduler.call_every(
            self.clock.now() + interval_s, interval_s,
            lambda: self._schedule_tick(model_id),
        )
        self._schedules[model_id] = handle
        return handle

    def _monitor_tick(self) -> None:
        with self._state_lock:
            serving = [m for m in self.state.models.values()
                       if m.state == ctl.SERVING and m.serving_version is not None]
        for inst in serving:
            try:
                self.check_drift(inst.model_id)
            except Exception as exc:
                logger.warning("monitor tick for %s failed: %s", inst.model_id, exc)

    def _rebuild_runtime(self) -> None:
        """After journal replay: restore endpoints (idle) and schedules."""
        with self._state_lock:
            models = list(self.state.models.values())
        for inst in models:
            if inst.state in (ctl.DELETED, ctl.ARCHIVED, ctl.REJECTED):
                continue
            entry = inst.serving_entry()
            if entry is None:
                continue
            try:
                manifest, _, _ = self._template_specs(inst)
                self.gateway.restore(inst.model_id, entry.version,
                                     ArtifactKey(**entry.artifact), manifest,
                                     self.config.idle_timeout_s)
            except Exception as exc:
                logger.warning("could not restore endpoint for %s: %s",
                               inst.model_id, exc)
            if inst.state == ctl.SERVING:
                self._ensure_retrain_schedule(inst.model_id)
        for key, model_id in self._scan_idempotency_keys().items():
            self._idem_keys[key] = model_id

    def _scan_idempotency_keys(self) -> dict[str, str]:
        keys = {}
        for event in self.journal.read_all():
            if event.kind == ctl.MODEL_CREATED:
                k = event.payload.get("idempotency_key")
                if k:
                    keys[k] = event.payload["model_id"]
        return keys

    # ------------------------------------------------------------------
    # commands (the REST surface)
    # ------------------------------------------------------------------

    def publish_template(self, archive: TemplateArchive) -> TemplateRef:
        ref = self.store.publish(archive)
        self._emit(ctl.TEMPLATE_PUBLISHED, None, {
            "name": ref.name, "version": ref.version, "digest": ref.digest,
        }, wait=True)
        return ref

    def publish_template_bytes(self, data: bytes) -> TemplateRef:
        return self.publish_template(read_archive(data))

    def instantiate_model(self, name: str, version: str | None,
                          config_doc: dict,
                          idempotency_key: str | None = None) -> ctl.ModelInstance:
        """Create a model instance from a published template."""
        with self._create_lock:
            if idempotency_key and idempotency_key in self._idem_keys:
                raise ConflictError(
                    f"idempotency key {idempotency_key!r} already used by model "
                    f"{self._idem_keys[idempotency_key]}"
                )
            ref = self.store.resolve(name, version)
            archive = self.store.pull(ref)
            manifest, _, _ = archive_specs(archive)
            self._spec_cache.setdefault(ref.digest, archive_specs(archive))
            config = ModelConfig.from_dict(config_doc)
            if config.connector is None:
                raise ValidationError("model config requires a data connector")
            merge_config(manifest, config)  # raises on bad params/mappings

            cpu = int(config.resources.get("cpu_millis", manifest.resources.cpu_millis))
            mem = int(config.resources.get("memory_mb", manifest.resources.memory_mb))
            if cpu < manifest.resources.cpu_millis or mem < manifest.resources.memory_mb:
                raise ValidationError(
                    "configured resources are below the template minimums"
                )
            with self._state_lock:
                live = [m for m in self.state.models.values()
                        if m.state != ctl.DELETED]
                used_cpu = sum(m.cpu_millis for m in live)
                used_mem = sum(m.memory_mb for m in live)
                counter = self.state.model_counter + 1
            if used_cpu + cpu > self.config.capacity_cpu_millis:
                raise CapacityError(
                    f"cpu capacity exceeded: {used_cpu} + {cpu} > "
                    f"{self.config.capacity_cpu_millis} cpu-millis"
                )
            if used_mem + mem > self.config.capacity_memory_mb:
                raise CapacityError(
                    f"memory capacity exceeded: {used_mem} + {mem} > "
                    f"{self.config.capacity_memory_mb} MB"
                )

            model_id = f"{manifest.name}-{counter:03d}"
            gate = manifest.approval_required and not config.auto_approve
            self._emit(ctl.MODEL_CREATED, model_id, {
                "model_id": model_id,
                "template": {"name": ref.name, "version": ref.version,
                             "digest": ref.digest},
                "config": config.to_dict(),
                "approval_gate": gate,
                "resources": {"cpu_millis": cpu, "memory_mb": mem},
                "idempotency_key": idempotency_key,
            }, wait=True)
            if idempotency_key:
                self._idem_keys[idempotency_key] = model_id
        with self._state_lock:
            return self.state.model(model_id)

    def train_model(self, model_id: str, reason: str = "manual") -> dict:
        """Start (or restart) the lifecycle; on a Serving model this is a
        manual retrain; in-progress states coalesce."""
        with self._state_lock:
            inst = self.state.model(model_id)
            state = inst.state
            active = inst.active_run_id
        if state in (ctl.TRAINING, ctl.ACQUIRING_DATA, ctl.RETRAINING):
            return {"model_id": model_id, "coalesced": True, "run_id": active,
                    "state": state}
        if state not in (ctl.CREATED, ctl.TRAINING_FAILED, ctl.REJECTED, ctl.SERVING):
            raise StateConflictError(
                f"cannot start training from state {state}"
            )
        self._emit(ctl.TRAIN_REQUESTED, model_id, {"reason": reason}, wait=True)
        with self._state_lock:
            return {"model_id": model_id, "coalesced": False,
                    "state": self.state.model(model_id).state}

    def trigger_retrain(self, model_id: str, reason: str = "manual") -> dict:
        if reason not in ctl.RETRAIN_REASONS:
            raise ValidationError(f"unknown retrain reason {reason!r}")
        return self.train_model(model_id, reason=reason)

    def approve_model(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.state != ctl.PENDING_APPROVAL or inst.pending_version is None:
                raise StateConflictError(
                    f"model {model_id} is {inst.state}, not PendingApproval"
                )
            version = inst.pending_version
        self._emit(ctl.MODEL_APPROVED, model_id, {"version": version}, wait=True)
        self.run_until_idle(timeout=30)
        with self._state_lock:
            return {"model_id": model_id, "version": version,
                    "state": self.state.model(model_id).state}

    def reject_model(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.state != ctl.PENDING_APPROVAL or inst.pending_version is None:
                raise StateConflictError(
                    f"model {model_id} is {inst.state}, not PendingApproval"
                )
            version = inst.pending_version
        self._emit(ctl.MODEL_REJECTED, model_id, {"version": version}, wait=True)
        with self._state_lock:
            return {"model_id": model_id, "version": version,
                    "state": self.state.model(model_id).state}

    def rollback_model(self, model_id: str, version: int) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            entry = inst.version_entry(version)
            if entry is None:
                raise NotFoundError(f"model {model_id} has no version {version}")
            if not entry.approved:
                raise StateConflictError(
                    f"version {version} was never approved; cannot roll back to it"
                )
            if inst.state not in (ctl.SERVING, ctl.ARCHIVED):
                raise StateConflictError(
                    f"rollback requires Serving or Archived, model is {inst.state}"
                )
            artifact = ArtifactKey(**entry.artifact)
        self.store.get_artifact(artifact)  # integrity check before the swap
        self._emit(ctl.MODEL_ROLLED_BACK, model_id, {"version": version}, wait=True)
        self.run_until_idle(timeout=30)
        with self._state_lock:
            return {"model_id": model_id, "version": version,
                    "state": self.state.model(model_id).state}

    def archive_model(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.state != ctl.SERVING:
                raise StateConflictError(
                    f"archive requires a Serving model, got {inst.state}"
                )
        self._emit(ctl.MODEL_ARCHIVED, model_id, {}, wait=True)
        with self._state_lock:
            return {"model_id": model_id, "state": self.state.model(model_id).state}

    def archive_version(self, model_id: str, version: int) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            entry = inst.version_entry(version)
            if entry is None:
                raise NotFoundError(f"model {model_id} has no version {version}")
            if inst.serving_version == version:
                raise StateConflictError(
                    f"version {version} is currently serving; cannot archive it"
                )
            if entry.archived:
                raise ConflictError(f"version {version} is already archived")
            keys = [ArtifactKey(**entry.artifact)]
            if entry.metrics_artifact:
                keys.append(ArtifactKey(**entry.metrics_artifact))
        moved = self.store.archive_model_version(model_id, version, keys)
        payload = {"version": version, "artifact": _key_dict(moved[0])}
        if len(moved) > 1:
            payload["metrics_artifact"] = _key_dict(moved[1])
        self._emit(ctl.MODEL_ARCHIVED, model_id, payload, wait=True)
        return {"model_id": model_id, "version": version,
                "artifact": _key_dict(moved[0])}

    def delete_model(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.state == ctl.DELETED:
                raise NotFoundError(f"model {model_id} is deleted")
        self._undeploy(model_id)  # drain in-flight, then remove
        self.monitors.forget_model(model_id)
        self._emit(ctl.MODEL_DELETED, model_id, {}, wait=True)
        return {"model_id": model_id, "state": ctl.DELETED}

    def cancel_run(self, run_id: str) -> dict:
        run = self.executor.cancel_run(run_id)
        return {"run_id": run_id, "status": run.status}

    def get_run(self, run_id: str) -> TrainingRun:
        return self.executor.get_run(run_id)

    # -- queries ----------------------------------------------------------------

    def model_info(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            if inst.state == ctl.DELETED:
                raise NotFoundError(f"model {model_id} is deleted")
            doc = inst.to_dict()
        if self.gateway.has_endpoint(model_id):
            doc["endpoint"] = self.gateway.endpoint(model_id).status_dict()
        return doc

    def list_models(self) -> list[dict]:
        with self._state_lock:
            models = [inst.to_dict() for inst in self.state.models.values()
                      if inst.state != ctl.DELETED]
        return sorted(models, key=lambda m: m["model_id"])

    def infer(self, model_id: str, request: dict) -> dict:
        with self._state_lock:
            inst = self.state.models.get(model_id)
            if inst is None or inst.state == ctl.DELETED:
                raise NotFoundError(f"model {model_id} not found")
            if inst.serving_version is None or inst.state in (
                    ctl.REJECTED, ctl.ARCHIVED, ctl.CREATED, ctl.TRAINING,
                    ctl.ACQUIRING_DATA, ctl.TRAINING_FAILED):
                raise StateConflictError(
                    f"model {model_id} is not serving (state {inst.state})"
                )
        return self.gateway.infer(model_id, request)

    def record_feedback(self, model_id: str, inference_id: str,
                        ground_truth: str) -> dict:
        with self._state_lock:
            self.state.model(model_id)  # existence check
        return self.monitors.record_feedback(model_id, inference_id, ground_truth)

    def model_metrics(self, model_id: str, window_size: int = 50) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            serving = inst.serving_entry()
            training_metrics = dict(serving.metrics) if serving else {}
        perf = self.monitors.performance_metrics(model_id, window_size=window_size)
        return {"model_id": model_id, "training_metrics": training_metrics,
                "rolling": perf}

    def check_drift(self, model_id: str) -> dict:
        with self._state_lock:
            inst = self.state.model(model_id)
            serving = inst.serving_entry()
            if serving is None:
                raise StateConflictError(
                    f"model {model_id} has no serving version to monitor"
                )
            values = merge_config(self._template_specs(inst)[0], inst.config).values
        reference = load_snapshot(self.store, model_id, serving.snapshot_digest)
        threshold = values.get("drift_threshold")
        min_window = values.get("drift_min_window")
        report = self.monitors.check_drift(
            model_id, reference,
            threshold=float(threshold) if threshold is not None else None,
            min_window=int(min_window) if min_window is not None else None,
        )
        self.run_until_idle(timeout=30)
        return report.to_dict()

    def events_since(self, since: int = 0) -> list[ctl.Event]:
        return [e for e in self.journal.read_all() if e.seq > since]

    def snapshot_bytes(self) -> bytes:
        with self._state_lock:
            return self.state.snapshot_bytes()

    def replay_snapshot_bytes(self) -> bytes:
        """Rebuild state purely from the journal; must equal ``snapshot_bytes``."""
        return ctl.replay(self.journal.read_all()).snapshot_bytes()


def _key_dict(key: ArtifactKey | None) -> dict | None:
    if key is None:
        return None
    return {"bucket": key.bucket, "key": key.key, "digest": key.digest}
