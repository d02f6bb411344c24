"""Lifecycle state machine, event sourcing, and the watcher decision function.

The controller's state is mutated exclusively by ``apply_event`` folding an
append-only journal; ``decide`` is the pure policy function mapping
(pre-event state, event) to runtime actions.  Replaying the journal from an
empty state reconstructs the exact live state (bit-equal canonical
snapshot), which is what makes crash recovery and the approval-gate fuzz
checks tractable.

Decide runs against the state *before* the event is applied; the runtime
then applies the event and executes the returned actions in order.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NotFoundError, StateConflictError
from .template import ModelConfig

logger = logging.getLogger(__name__)

# Lifecycle states
CREATED = "Created"
ACQUIRING_DATA = "AcquiringData"
TRAINING = "Training"
TRAINING_FAILED = "TrainingFailed"
PENDING_APPROVAL = "PendingApproval"
REJECTED = "Rejected"
SERVING = "Serving"
RETRAINING = "Retraining"
ARCHIVED = "Archived"
DELETED = "Deleted"

LIFECYCLE_STATES = (
    CREATED, ACQUIRING_DATA, TRAINING, TRAINING_FAILED, PENDING_APPROVAL,
    REJECTED, SERVING, RETRAINING, ARCHIVED, DELETED,
)

# Event kinds.  The final four are journal plumbing: replay-reconstructible
# state needs every mutation on the wire, and skip/overwrite outcomes are
# part of the observable contract.
TEMPLATE_PUBLISHED = "TemplatePublished"
MODEL_CREATED = "ModelCreated"
DATA_FETCHED = "DataFetched"
TRAINING_STARTED = "TrainingStarted"
TRAINING_SUCCEEDED = "TrainingSucceeded"
TRAINING_FAILED_EVENT = "TrainingFailed"
MODEL_PENDING_APPROVAL = "ModelPendingApproval"
MODEL_APPROVED = "ModelApproved"
MODEL_REJECTED = "ModelRejected"
MODEL_DEPLOYED = "ModelDeployed"
DRIFT_DETECTED = "DriftDetected"
ACCURACY_DEGRADED = "AccuracyDegraded"
RETRAIN_SCHEDULED = "RetrainScheduled"
MODEL_ARCHIVED = "ModelArchived"
MODEL_DELETED = "ModelDeleted"
TRAIN_REQUESTED = "TrainRequested"
MODEL_ROLLED_BACK = "ModelRolledBack"
RETRAIN_SKIPPED = "RetrainSkipped"
FEEDBACK_OVERWRITTEN = "FeedbackOverwritten"

EVENT_KINDS = frozenset({
    TEMPLATE_PUBLISHED, MODEL_CREATED, DATA_FETCHED, TRAINING_STARTED,
    TRAINING_SUCCEEDED, TRAINING_FAILED_EVENT, MODEL_PENDING_APPROVAL,
    MODEL_APPROVED, MODEL_REJECTED, MODEL_DEPLOYED, DRIFT_DETECTED,
    ACCURACY_DEGRADED, RETRAIN_SCHEDULED, MODEL_ARCHIVED, MODEL_DELETED,
    TRAIN_REQUESTED, MODEL_ROLLED_BACK, RETRAIN_SKIPPED, FEEDBACK_OVERWRITTEN,
})

RETRAIN_REASONS = ("manual", "scheduled", "drift", "accuracy")


@dataclass
class Event:
    kind: str
    model_id: str | None = None
    payload: dict = field(default_factory=dict)
    seq: int = 0
    at: float = 0.0

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "model_id": self.model_id,
                "at": self.at, "payload": self.payload}

    @classmethod
    def from_dict(cls, doc: dict) -> "Event":
        return cls(kind=doc["kind"], model_id=doc.get("model_id"),
                   payload=doc.get("payload") or {}, seq=doc["seq"], at=doc["at"])


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass
class ModelVersion:
    version: int
    run_id: str
    artifact: dict  # {bucket, key, digest}
    metrics_artifact: dict | None
    metrics: dict[str, float]
    created_at: float
    snapshot_digest: str
    reason: str = "manual"
    approved: bool = False
    rejected: bool = False
    archived: bool = False

    def to_dict(self) -> dict:
        return {
            "version": self.version, "run_id": self.run_id,
            "artifact": self.artifact, "metrics_artifact": self.metrics_artifact,
            "metrics": self.metrics, "created_at": self.created_at,
            "snapshot_digest": self.snapshot_digest, "reason": self.reason,
            "approved": self.approved, "rejected": self.rejected,
            "archived": self.archived,
        }


@dataclass
class ModelInstance:
    model_id: str
    template_name: str
    template_version: str
    template_digest: str
    config: ModelConfig
    approval_gate: bool  # manifest approval_required and not config auto_approve
    cpu_millis: int
    memory_mb: int
    state: str = CREATED
    versions: list[ModelVersion] = field(default_factory=list)
    serving_version: int | None = None
    pending_version: int | None = None
    active_run_id: str | None = None
    fetched_digest: str | None = None
    created_at: float = 0.0

    def version_entry(self, version: int) -> ModelVersion | None:
        for v in self.versions:
            if v.version == version:
                return v
        return None

    def next_version(self) -> int:
        return max((v.version for v in self.versions), default=0) + 1

    def serving_entry(self) -> ModelVersion | None:
        if self.serving_version is None:
            return None
        return self.version_entry(self.serving_version)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "template": {"name": self.template_name,
                         "version": self.template_version,
                         "digest": self.template_digest},
            "config": self.config.to_dict(),
            "approval_gate": self.approval_gate,
            "resources": {"cpu_millis": self.cpu_millis, "memory_mb": self.memory_mb},
            "state": self.state,
            "versions": [v.to_dict() for v in self.versions],
            "serving_version": self.serving_version,
            "pending_version": self.pending_version,
            "active_run_id": self.active_run_id,
            "fetched_digest": self.fetched_digest,
            "created_at": self.created_at,
        }


@dataclass
class ControllerState:
    models: dict[str, ModelInstance] = field(default_factory=dict)
    templates: list[dict] = field(default_factory=list)  # published coordinates
    last_seq: int = 0
    model_counter: int = 0
    run_counter: int = 0

    def model(self, model_id: str) -> ModelInstance:
        inst = self.models.get(model_id)
        if inst is None:
            raise NotFoundError(f"model {model_id} not found")
        return inst

    def to_dict(self) -> dict:
        return {
            "last_seq": self.last_seq,
            "model_counter": self.model_counter,
            "run_counter": self.run_counter,
            "templates": self.templates,
            "models": {mid: inst.to_dict() for mid, inst in sorted(self.models.items())},
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# Actions: what the watcher tells the runtime to do
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StartFetch:
    model_id: str
    purpose: str = "train"  # train | probe
    reason: str = "manual"


@dataclass(frozen=True)
class StartRun:
    model_id: str
    snapshot_digest: str
    reason: str = "manual"


@dataclass(frozen=True)
class Deploy:
    model_id: str
    version: int


@dataclass(frozen=True)
class Undeploy:
    model_id: str


@dataclass(frozen=True)
class Emit:
    kind: str
    model_id: str
    payload: dict = field(default_factory=dict)


Action = StartFetch | StartRun | Deploy | Undeploy | Emit


# ---------------------------------------------------------------------------
# Transition table
# ---------------------------------------------------------------------------

# (state, event kind) -> callable(instance, event) -> new state.
# Entries absent from the table are inapplicable and leave state unchanged.


def _gate(inst: ModelInstance) -> bool:
    return inst.approval_gate


def transition(state: str, kind: str, *, approval_gate: bool = True,
               had_serving: bool = False) -> str:
    """Next lifecycle state for (state, event); raises on inapplicable pairs."""
    table: dict[tuple[str, str], str] = {
        (CREATED, TRAIN_REQUESTED): ACQUIRING_DATA,
        (TRAINING_FAILED, TRAIN_REQUESTED): ACQUIRING_DATA,
        (REJECTED, TRAIN_REQUESTED): ACQUIRING_DATA,
        (SERVING, TRAIN_REQUESTED): RETRAINING,
        (ACQUIRING_DATA, DATA_FETCHED): TRAINING,
        (RETRAINING, DATA_FETCHED): RETRAINING,
        (SERVING, DATA_FETCHED): SERVING,  # scheduled probe fetch
        (TRAINING, TRAINING_STARTED): TRAINING,
        (RETRAINING, TRAINING_STARTED): RETRAINING,
        (TRAINING, TRAINING_SUCCEEDED): PENDING_APPROVAL if approval_gate else SERVING,
        (RETRAINING, TRAINING_SUCCEEDED): PENDING_APPROVAL if approval_gate else SERVING,
        (TRAINING, TRAINING_FAILED_EVENT): TRAINING_FAILED,
        (ACQUIRING_DATA, TRAINING_FAILED_EVENT): TRAINING_FAILED,
        (RETRAINING, TRAINING_FAILED_EVENT): SERVING,  # old version keeps serving
        (PENDING_APPROVAL, MODEL_PENDING_APPROVAL): PENDING_APPROVAL,
        (PENDING_APPROVAL, MODEL_APPROVED): SERVING,
        (PENDING_APPROVAL, MODEL_REJECTED): REJECTED,
        (SERVING, MODEL_DEPLOYED): SERVING,
        (SERVING, RETRAIN_SCHEDULED): RETRAINING,
        (RETRAINING, RETRAIN_SCHEDULED): RETRAINING,
        (SERVING, DRIFT_DETECTED): RETRAINING,
        (SERVING, ACCURACY_DEGRADED): RETRAINING,
        (SERVING, RETRAIN_SKIPPED): SERVING,
        (SERVING, MODEL_ARCHIVED): ARCHIVED,
        (ARCHIVED, MODEL_ROLLED_BACK): SERVING,
        (SERVING, MODEL_ROLLED_BACK): SERVING,
    }
    if kind == MODEL_DELETED:
        return DELETED  # any state; command layer undeploys first
    key = (state, kind)
    if key not in table:
        raise StateConflictError(
            f"event {kind} is not applicable in state {state}"
        )
    return table[key]


# ---------------------------------------------------------------------------
# apply: fold one event into the state
# ---------------------------------------------------------------------------


def apply_event(state: ControllerState, event: Event) -> None:
    """Mutate ``state`` per ``event``; inapplicable events raise and leave
    the state untouched."""
    state.last_seq = max(state.last_seq, event.seq)
    kind = event.kind
    p = event.payload

    if kind == TEMPLATE_PUBLISHED:
        state.templates.append({"name": p["name"], "version": p["version"],
                                "digest": p["digest"]})
        return
    if kind == MODEL_CREATED:
        state.model_counter += 1
        inst = ModelInstance(
            model_id=p["model_id"],
            template_name=p["template"]["name"],
            template_version=p["template"]["version"],
            template_digest=p["template"]["digest"],
            config=ModelConfig.from_dict(p["config"]),
            approval_gate=bool(p["approval_gate"]),
            cpu_millis=int(p["resources"]["cpu_millis"]),
            memory_mb=int(p["resources"]["memory_mb"]),
            created_at=event.at,
        )
        state.models[inst.model_id] = inst
        return
    if kind in (RETRAIN_SKIPPED, FEEDBACK_OVERWRITTEN, MODEL_PENDING_APPROVAL):
        return  # informational; journaled for observability and replay parity

    if event.model_id is None:
        return
    inst = state.models.get(event.model_id)
    if inst is None:
        raise NotFoundError(f"event {kind} names unknown model {event.model_id}")

    if kind == MODEL_ARCHIVED and p.get("version") is not None:
        new_state = inst.state  # version-level archival keeps the lifecycle state
    else:
        new_state = transition(inst.state, kind, approval_gate=inst.approval_gate,
                               had_serving=inst.serving_version is not None)

    if kind == DATA_FETCHED:
        inst.fetched_digest = p.get("digest")
    elif kind == TRAINING_STARTED:
        inst.active_run_id = p.get("run_id")
        run_no = _run_number(p.get("run_id", ""))
        state.run_counter = max(state.run_counter, run_no)
    elif kind == TRAINING_SUCCEEDED:
        version = ModelVersion(
            version=int(p["version"]), run_id=p["run_id"],
            artifact=dict(p["artifact"]),
            metrics_artifact=dict(p["metrics_artifact"]) if p.get("metrics_artifact") else None,
            metrics=dict(p.get("metrics") or {}),
            created_at=event.at,
            snapshot_digest=p.get("snapshot_digest", ""),
            reason=p.get("reason", "manual"),
            approved=not inst.approval_gate,
        )
        inst.versions.append(version)
        inst.active_run_id = None
        inst.pending_version = version.version if inst.approval_gate else None
    elif kind == TRAINING_FAILED_EVENT:
        inst.active_run_id = None
    elif kind == MODEL_APPROVED:
        v = inst.version_entry(int(p["version"]))
        if v is not None:
            v.approved = True
        inst.pending_version = None
    elif kind == MODEL_REJECTED:
        v = inst.version_entry(int(p["version"]))
        if v is not None:
            v.rejected = True
        inst.pending_version = None
        inst.serving_version = None
    elif kind == MODEL_DEPLOYED:
        inst.serving_version = int(p["version"])
    elif kind == MODEL_ROLLED_BACK:
        inst.serving_version = int(p["version"])
    elif kind == MODEL_ARCHIVED:
        if p.get("version") is not None:
            v = inst.version_entry(int(p["version"]))
            if v is not None:
                v.archived = True
                if p.get("artifact"):
                    v.artifact = dict(p["artifact"])
                if p.get("metrics_artifact"):
                    v.metrics_artifact = dict(p["metrics_artifact"])

    inst.state = new_state


def _run_number(run_id: str) -> int:
    if run_id.startswith("run-"):
        try:
            return int(run_id[4:])
        except ValueError:
            return 0
    return 0


# ---------------------------------------------------------------------------
# decide: the watcher policy (pure)
# ---------------------------------------------------------------------------


def decide(state: ControllerState, event: Event) -> list[Action]:
    """Actions for an event given the *pre-event* state.

    Pure: reads the state, never mutates it.  Unknown or inapplicable events
    produce no actions.
    """
    kind = event.kind
    p = event.payload
    if kind not in EVENT_KINDS:
        logger.warning("ignoring unknown event kind %r", kind)
        return []
    if event.model_id is None or event.model_id not in state.models:
        return []
    inst = state.models[event.model_id]
    mid = inst.model_id

    if kind == TRAIN_REQUESTED:
        reason = p.get("reason", "manual")
        if inst.state in (CREATED, TRAINING_FAILED, REJECTED):
            return [StartFetch(mid, reason=reason)]
        if inst.state == SERVING:
            return [Emit(RETRAIN_SCHEDULED, mid, {"reason": reason}),
                    StartFetch(mid, reason=reason)]
        return []

    if kind == DATA_FETCHED:
        digest = p.get("digest", "")
        if inst.state == ACQUIRING_DATA:
            return [StartRun(mid, digest, reason=p.get("reason", "manual"))]
        if inst.state == RETRAINING and inst.active_run_id is None:
            return [StartRun(mid, digest, reason=p.get("reason", "manual"))]
        if inst.state == SERVING:
            # scheduled probe: retrain only when the data actually changed
            serving = inst.serving_entry()
            if serving is not None and serving.snapshot_digest == digest:
                return [Emit(RETRAIN_SKIPPED, mid,
                             {"reason": "cache-hit", "digest": digest})]
            return [Emit(RETRAIN_SCHEDULED, mid, {"reason": "scheduled"}),
                    StartRun(mid, digest, reason="scheduled")]
        return []

    if kind == TRAINING_SUCCEEDED:
        if inst.state not in (TRAINING, RETRAINING):
            return []
        version = int(p["version"])
        if inst.approval_gate:
            return [Emit(MODEL_PENDING_APPROVAL, mid, {"version": version})]
        return [Deploy(mid, version)]

    if kind == MODEL_APPROVED:
        if inst.state != PENDING_APPROVAL:
            return []
        return [Deploy(mid, int(p["version"]))]

    if kind == MODEL_REJECTED:
        if inst.state != PENDING_APPROVAL:
            return []
        return [Undeploy(mid)] if inst.serving_version is not None else []

    if kind in (DRIFT_DETECTED, ACCURACY_DEGRADED):
        if inst.state != SERVING:
            return []
        reason = "drift" if kind == DRIFT_DETECTED else "accuracy"
        return [Emit(RETRAIN_SCHEDULED, mid, {"reason": reason}),
                StartFetch(mid, reason=reason)]

    if kind == MODEL_ROLLED_BACK:
        if inst.state not in (SERVING, ARCHIVED):
            return []
        target = inst.version_entry(int(p["version"]))
        if target is None or not target.approved:
            return []  # the gate also holds for rollbacks
        return [Deploy(mid, target.version)]

    if kind == MODEL_ARCHIVED:
        if p.get("version") is None and inst.state == SERVING:
            return [Undeploy(mid)]
        return []

    return []


# ---------------------------------------------------------------------------
# Journal
# ---------------------------------------------------------------------------


class Journal:
    """Append-only JSON-lines event log with atomic snapshot rewrites."""

    def __init__(self, state_dir: str | os.PathLike):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @property
    def events_path(self) -> Path:
        return self.state_dir / "events.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.state_dir / "snapshot.json"

    def append(self, event: Event) -> None:
        line = json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"))
        with self._lock:
            with open(self.events_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def read_all(self) -> list[Event]:
        if not self.events_path.exists():
            return []
        events = []
        with open(self.events_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(Event.from_dict(json.loads(line)))
        return events

    def write_snapshot(self, state: ControllerState) -> None:
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        tmp.write_bytes(state.snapshot_bytes())
        os.replace(tmp, self.snapshot_path)


def fold_event(state: ControllerState, event: Event) -> bool:
    """Apply one event, skipping inapplicable ones exactly as replay does.

    Returns True when the event changed state, False when it was skipped.
    The live loop and replay share this so they can never diverge.
    """
    try:
        apply_event(state, event)
        return True
    except (StateConflictError, NotFoundError) as exc:
        logger.warning("skipping event seq=%s kind=%s: %s", event.seq, event.kind, exc)
        state.last_seq = max(state.last_seq, event.seq)
        return False


def replay(events: list[Event]) -> ControllerState:
    """Fold a journal into a fresh state."""
    state = ControllerState()
    for event in events:
        fold_event(state, event)
    return state
