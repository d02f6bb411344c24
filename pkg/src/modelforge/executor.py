"""Training pipeline executor.

Pipelines are linear lists of builtin ops.  Each step runs in an isolated
working directory containing exactly its declared inputs; named artifacts
flow between steps as directories.  Runs are deterministic given (pipeline,
resolved config, snapshot digest, seeds): every stochastic op takes an
explicit seed, defaulting to the platform seed 17.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import queue
import random
import shutil
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import models
from .connectors import (
    DATA_FILENAME,
    SCHEMA_FILENAME,
    DatasetSnapshot,
    canonical_bytes,
    parse_canonical,
    parse_rfc3339,
)
from .errors import NotFoundError, ValidationError
from .store import ArtifactKey, Store
from .template import PARAM_REF_RE, PipelineSpec, ResolvedConfig, ServingSpec

logger = logging.getLogger(__name__)

DEFAULT_SEED = 17
MODELS_BUCKET = "models"
LOG_EXCERPT_BYTES = 64 * 1024

RUN_RUNNING = "Running"
RUN_SUCCEEDED = "Succeeded"
RUN_FAILED = "Failed"
RUN_CANCELLED = "Cancelled"
RUN_TIMED_OUT = "TimedOut"


@dataclass
class ResourceLimits:
    wall_clock_s: float | None = None


@dataclass
class StepResult:
    name: str
    status: str
    duration_s: float
    log: str = ""


@dataclass
class TrainingRun:
    run_id: str
    model_id: str
    pipeline_digest: str
    started_at: float
    finished_at: float | None = None
    status: str = RUN_RUNNING
    step_results: list[StepResult] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    model_artifact: ArtifactKey | None = None
    metrics_artifact: ArtifactKey | None = None
    snapshot_digest: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model_id": self.model_id,
            "pipeline_digest": self.pipeline_digest,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "status": self.status,
            "steps": [
                {"name": s.name, "status": s.status, "duration_s": s.duration_s,
                 "log": s.log}
                for s in self.step_results
            ],
            "metrics": dict(self.metrics),
            "snapshot_digest": self.snapshot_digest,
            "error": self.error,
        }


# ---------------------------------------------------------------------------
# Dataset artifacts on disk
# ---------------------------------------------------------------------------


def save_snapshot_dir(path: Path, snapshot: DatasetSnapshot) -> None:
    path.mkdir(parents=True, exist_ok=True)
    (path / SCHEMA_FILENAME).write_text(json.dumps({
        "fields": [{"name": n, "kind": k} for n, k in snapshot.schema],
        "row_count": snapshot.row_count,
        "rows_rejected": snapshot.rows_rejected,
        "fetched_at": snapshot.fetched_at,
        "as_of": snapshot.as_of,
        "digest": snapshot.digest,
    }, sort_keys=True, indent=1), "utf-8")
    (path / DATA_FILENAME).write_bytes(canonical_bytes(snapshot.schema, snapshot.rows))


def load_snapshot_dir(path: Path) -> DatasetSnapshot:
    meta = json.loads((path / SCHEMA_FILENAME).read_text("utf-8"))
    snap = parse_canonical((path / DATA_FILENAME).read_bytes(),
                           fetched_at=meta.get("fetched_at", 0.0))
    snap.rows_rejected = meta.get("rows_rejected", 0)
    snap.as_of = meta.get("as_of")
    return snap


# ---------------------------------------------------------------------------
# Builtin ops
# ---------------------------------------------------------------------------


class OpContext:
    """What a builtin op sees: resolved params and its input/output dirs."""

    def __init__(self, params: dict, inputs: list[Path], outputs: list[Path],
                 default_seed: int = DEFAULT_SEED):
        self.params = params
        self.inputs = inputs
        self.outputs = outputs
        self.default_seed = default_seed
        self._log: list[str] = []

    def log(self, message: str) -> None:
        self._log.append(message)

    def log_text(self) -> str:
        text = "\n".join(self._log)
        return text[-LOG_EXCERPT_BYTES:]

    def param(self, name: str, default=None):
        return self.params.get(name, default)

    def int_param(self, name: str, default: int) -> int:
        return int(self.params.get(name, default))

    def float_param(self, name: str, default: float) -> float:
        return float(self.params.get(name, default))

    def str_param(self, name: str, default: str | None = None) -> str:
        value = self.params.get(name, default)
        if value is None:
            raise ValidationError(f"op requires param {name!r}")
        return str(value)

    def seed(self) -> int:
        return self.int_param("seed", self.default_seed)


def _float_grid(raw, fallback: list[float]) -> list[float]:
    if raw is None:
        return list(fallback)
    if isinstance(raw, str):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return [float(p) for p in parts]
    if isinstance(raw, (list, tuple)):
        return [float(x) for x in raw]
    return [float(raw)]


def _copy_artifact(src: Path, dest: Path) -> None:
    if dest.exists():
        shutil.rmtree(dest)
    shutil.copytree(src, dest)


def op_connector_load(ctx: OpContext) -> dict[str, float]:
    """Materialize the acquired dataset into the pipeline; shape-preserving."""
    snap = load_snapshot_dir(ctx.inputs[0])
    ctx.log(f"loaded {snap.row_count} row(s), {snap.rows_rejected} rejected at fetch")
    save_snapshot_dir(ctx.outputs[0], snap)
    return {"rows_loaded": float(snap.row_count)}


def op_augment_none(ctx: OpContext) -> dict[str, float]:
    """Placeholder augmentation stage: a faithful no-op."""
    _copy_artifact(ctx.inputs[0], ctx.outputs[0])
    return {}


def op_split(ctx: OpContext) -> dict[str, float]:
    """Seeded shuffle then split; |train| = ceil(ratio * n)."""
    snap = load_snapshot_dir(ctx.inputs[0])
    if snap.empty:
        raise ValidationError("cannot split an empty dataset")
    ratio = ctx.float_param("ratio", 0.8)
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0, 1), got {ratio}")
    seed = ctx.seed()
    idx = list(range(snap.row_count))
    random.Random(seed).shuffle(idx)
    n_train = math.ceil(ratio * snap.row_count)
    train_rows = [snap.rows[i] for i in idx[:n_train]]
    hold_rows = [snap.rows[i] for i in idx[n_train:]]
    ctx.log(f"split {snap.row_count} rows -> {len(train_rows)} train / "
            f"{len(hold_rows)} holdout (seed {seed})")
    from .connectors import make_snapshot
    save_snapshot_dir(ctx.outputs[0], make_snapshot(snap.schema, train_rows, snap.fetched_at))
    save_snapshot_dir(ctx.outputs[1], make_snapshot(snap.schema, hold_rows, snap.fetched_at))
    return {"train_rows": float(len(train_rows)), "holdout_rows": float(len(hold_rows))}


def _doc_pairs(snap: DatasetSnapshot, text_field: str, label_field: str):
    names = snap.field_names()
    if text_field not in names:
        raise ValidationError(f"dataset has no text field {text_field!r}")
    if label_field not in names:
        raise ValidationError(f"dataset has no label field {label_field!r}")
    ti, li = names.index(text_field), names.index(label_field)
    return [(row[ti], row[li]) for row in snap.rows]


def _write_model(ctx: OpContext, model) -> None:
    out = ctx.outputs[0]
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.bin").write_bytes(models.serialize_model(model))


def _majority_fallback(ctx: OpContext, labels: list[str], holdout_pairs) -> dict[str, float]:
    model = models.majority_train(labels)
    _write_model(ctx, model)
    correct = sum(1 for _, lab in holdout_pairs if lab == model.label)
    acc = correct / len(holdout_pairs) if holdout_pairs else 0.0
    ctx.log(f"single-class labels; majority fallback -> {model.label!r}")
    return {"degenerate_labels": 1.0, "val_accuracy": acc}


def op_train_nb_grid(ctx: OpContext) -> dict[str, float]:
    """Grid search over Laplace alpha; best holdout accuracy wins, earliest
    grid position breaks ties."""
    train = load_snapshot_dir(ctx.inputs[0])
    holdout = load_snapshot_dir(ctx.inputs[1])
    text_field = ctx.str_param("text_field")
    label_field = ctx.str_param("label_field", "label")
    grid = _float_grid(ctx.param("alpha_grid"), [1.0])
    if not grid:
        raise ValidationError("alpha_grid is empty")

    train_pairs = _doc_pairs(train, text_field, label_field)
    hold_pairs = _doc_pairs(holdout, text_field, label_field)
    if not train_pairs:
        raise ValidationError("training split is empty")
    labels = [lab for _, lab in train_pairs]
    if len(set(labels)) < 2:
        return _majority_fallback(ctx, labels, hold_pairs)

    metrics: dict[str, float] = {}
    best_model = None
    best_score = -1.0
    best_alpha = grid[0]
    for i, alpha in enumerate(grid):
        model = models.nb_train(train_pairs, alpha=alpha, text_fields=[text_field])
        if hold_pairs:
            correct = sum(1 for text, lab in hold_pairs
                          if models.nb_predict(model, text)[0] == lab)
            score = correct / len(hold_pairs)
        else:
            score = 0.0
        metrics[f"candidate_{i}_alpha"] = alpha
        metrics[f"candidate_{i}_val_accuracy"] = score
        ctx.log(f"alpha={alpha}: val_accuracy={score:.4f}")
        if score > best_score:
            best_model, best_score, best_alpha = model, score, alpha
    assert best_model is not None
    _write_model(ctx, best_model)
    metrics["val_accuracy"] = best_score
    metrics["best_alpha"] = best_alpha
    if not hold_pairs:
        metrics["holdout_empty"] = 1.0
    return metrics


def _tabular_fields(snap: DatasetSnapshot, label_field: str) -> tuple[list[str], list[str]]:
    numeric, categorical = [], []
    for name, kind in snap.schema:
        if name == label_field:
            continue
        if kind == "numeric":
            numeric.append(name)
        elif kind == "categorical":
            categorical.append(name)
    return numeric, categorical


def op_train_logreg(ctx: OpContext) -> dict[str, float]:
    """Grid search over learning rates for the binary tabular classifier."""
    train = load_snapshot_dir(ctx.inputs[0])
    holdout = load_snapshot_dir(ctx.inputs[1])
    label_field = ctx.str_param("label_field", "label")
    grid = _float_grid(ctx.param("lr_grid"), [0.1])
    iters = ctx.int_param("iters", 1000)
    if not grid:
        raise ValidationError("lr_grid is empty")
    if iters < 1:
        raise ValidationError("iters must be >= 1")

    names = train.field_names()
    if label_field not in names:
        raise ValidationError(f"dataset has no label field {label_field!r}")
    rows = train.rows_as_dicts()
    hold_rows = holdout.rows_as_dicts()
    if not rows:
        raise ValidationError("training split is empty")
    labels = [r[label_field] for r in rows]
    hold_pairs = [(r, r[label_field]) for r in hold_rows]
    if len(set(labels)) < 2:
        return _majority_fallback(ctx, labels, hold_pairs)

    numeric, categorical = _tabular_fields(train, label_field)
    if not numeric and not categorical:
        raise ValidationError("no numeric or categorical feature fields in dataset")

    metrics: dict[str, float] = {}
    best_model = None
    best_score = -1.0
    best_lr = grid[0]
    for i, lr in enumerate(grid):
        model = models.logreg_train_records(
            rows, labels, lr=lr, iters=iters,
            numeric_fields=numeric, categorical_fields=categorical,
        )
        if hold_pairs:
            correct = sum(1 for rec, lab in hold_pairs
                          if models.logreg_predict_record(model, rec)[1] == lab)
            score = correct / len(hold_pairs)
        else:
            score = 0.0
        metrics[f"candidate_{i}_lr"] = lr
        metrics[f"candidate_{i}_val_accuracy"] = score
        ctx.log(f"lr={lr}: val_accuracy={score:.4f}")
        if score > best_score:
            best_model, best_score, best_lr = model, score, lr
    assert best_model is not None
    _write_model(ctx, best_model)
    metrics["val_accuracy"] = best_score
    metrics["best_lr"] = best_lr
    if not hold_pairs:
        metrics["holdout_empty"] = 1.0
    return metrics


def predict_label(model, record: dict[str, str]) -> str:
    """One prediction as a plain label, whatever the family."""
    if isinstance(model, models.NBModel):
        text = " ".join(record.get(f, "") for f in model.text_fields)
        return models.nb_predict(model, text)[0]
    if isinstance(model, models.LRModel):
        return models.logreg_predict_record(model, record)[1]
    if isinstance(model, models.MajorityModel):
        return model.label
    raise ValidationError(f"model family {type(model).__name__} has no label prediction")


def op_evaluate_classification(ctx: OpContext) -> dict[str, float]:
    """Accuracy, per-class precision/recall, nonzero confusion counts."""
    model_bytes = (ctx.inputs[0] / "model.bin").read_bytes()
    model = models.deserialize_model(model_bytes)
    holdout = load_snapshot_dir(ctx.inputs[1])
    label_field = ctx.str_param("label_field", "label")
    out = ctx.outputs[0]
    out.mkdir(parents=True, exist_ok=True)

    if holdout.empty:
        metrics: dict[str, float] = {"holdout_empty": 1.0}
        (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True), "utf-8")
        return metrics

    rows = holdout.rows_as_dicts()
    truths = [r[label_field] for r in rows]
    preds = [predict_label(model, r) for r in rows]
    correct = sum(1 for t, p in zip(truths, preds) if t == p)
    metrics = {"accuracy": correct / len(rows)}

    confusion: dict[tuple[str, str], int] = {}
    for t, p in zip(truths, preds):
        confusion[(t, p)] = confusion.get((t, p), 0) + 1
    for cls in sorted(set(truths) | set(preds)):
        tp = confusion.get((cls, cls), 0)
        predicted = sum(v for (t, p), v in confusion.items() if p == cls)
        actual = sum(v for (t, p), v in confusion.items() if t == cls)
        if predicted:
            metrics[f"precision_{cls}"] = tp / predicted
        if actual:
            metrics[f"recall_{cls}"] = tp / actual
    for (t, p), count in sorted(confusion.items()):
        metrics[f"confusion_{t}__{p}"] = float(count)

    ctx.log(f"evaluated {len(rows)} rows: accuracy={metrics['accuracy']:.4f}")
    (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True), "utf-8")
    return metrics


def op_index_tfidf(ctx: OpContext) -> dict[str, float]:
    """Build the similarity index; val_score is the mean top-1 self-retrieval
    cosine (nearest neighbor excluding self)."""
    snap = load_snapshot_dir(ctx.inputs[0])
    text_field = ctx.str_param("text_field")
    id_field = ctx.str_param("id_field", "id")
    timestamp_field = ctx.param("timestamp_field")
    status_field = ctx.param("status_field")
    names = snap.field_names()
    for needed in (text_field, id_field):
        if needed not in names:
            raise ValidationError(f"dataset has no field {needed!r}")

    docs = []
    for row in snap.rows_as_dicts():
        ts = None
        if timestamp_field and row.get(str(timestamp_field)):
            ts = parse_rfc3339(row[str(timestamp_field)])
        status = row.get(str(status_field), "") if status_field else ""
        docs.append((row[id_field], row[text_field], ts, status))

    query_defaults = {
        "status_filter": ctx.param("compare_to"),
        "window_days": (int(ctx.param("time_window_days"))
                        if ctx.param("time_window_days") is not None else None),
        "top_k": ctx.int_param("top_k", 5),
    }
    index = models.tfidf_index(docs, text_field=text_field, query_defaults=query_defaults)
    _write_model(ctx, index)
    score = models.tfidf_self_retrieval(index)
    ctx.log(f"indexed {len(docs)} docs; self-retrieval={score:.4f}")
    return {"val_score": score, "indexed_docs": float(len(docs))}


@dataclass(frozen=True)
class OpDef:
    op_id: str
    fn: Callable[[OpContext], dict[str, float]]
    description: str
    n_inputs: int
    n_outputs: int


OPS: dict[str, OpDef] = {
    od.op_id: od for od in [
        OpDef("connector.load", op_connector_load,
              "materialize the fetched dataset", 1, 1),
        OpDef("augment.none", op_augment_none,
              "no-op augmentation placeholder", 1, 1),
        OpDef("split.holdout", op_split,
              "seeded train/holdout split", 1, 2),
        OpDef("train.nb_grid", op_train_nb_grid,
              "naive Bayes text classifier with alpha grid search", 2, 1),
        OpDef("train.logreg", op_train_logreg,
              "binary logistic regression with lr grid search", 2, 1),
        OpDef("eval.classification", op_evaluate_classification,
              "classification metrics on the holdout", 2, 1),
        OpDef("index.tfidf", op_index_tfidf,
              "TF-IDF cosine similarity index", 1, 1),
    ]
}


def registered_op_ids() -> set[str]:
    return set(OPS)


# ---------------------------------------------------------------------------
# Pipeline runner
# ---------------------------------------------------------------------------


def pipeline_digest(pipeline: PipelineSpec) -> str:
    doc = [{"name": s.name, "op": s.op, "params": s.params,
            "inputs": list(s.inputs), "outputs": list(s.outputs)}
           for s in pipeline.steps]
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def substitute_params(step_params: dict, values: dict) -> dict:
    resolved = {}
    for key, raw in step_params.items():
        if isinstance(raw, str):
            m = PARAM_REF_RE.match(raw)
            if m:
                pname = m.group(1)
                if pname not in values:
                    raise ValidationError(
                        f"step param {key!r} references unresolved param {pname!r}"
                    )
                resolved[key] = values[pname]
                continue
        resolved[key] = raw
    return resolved


def run_pipeline(pipeline: PipelineSpec, config: ResolvedConfig,
                 data: DatasetSnapshot, limits: ResourceLimits,
                 store: Store, serving: ServingSpec, *,
                 model_id: str = "adhoc", run_id: str = "run-000000",
                 workspace: Path | str | None = None,
                 cancel_event: threading.Event | None = None,
                 step_hook: Callable[[str], None] | None = None,
                 started_at: float | None = None) -> TrainingRun:
    """Execute all steps in order; see module docstring for semantics."""
    workspace = Path(workspace) if workspace else Path(store.root) / "runs"
    run_dir = workspace / run_id
    run = TrainingRun(
        run_id=run_id, model_id=model_id,
        pipeline_digest=pipeline_digest(pipeline),
        started_at=started_at if started_at is not None else time.time(),
        snapshot_digest=data.digest,
    )
    t0 = time.monotonic()

    artifacts_dir = run_dir / "artifacts"
    dataset_dir = artifacts_dir / "dataset"
    save_snapshot_dir(dataset_dir, data)
    artifact_dirs: dict[str, Path] = {"dataset": dataset_dir}

    def finish(status: str, error: str | None = None) -> TrainingRun:
        run.status = status
        run.error = error
        run.finished_at = run.started_at + (time.monotonic() - t0)
        (run_dir / "metrics.json").write_text(
            json.dumps(run.metrics, sort_keys=True, indent=1), "utf-8")
        (run_dir / "run.json").write_text(
            json.dumps(run.to_dict(), sort_keys=True, indent=1), "utf-8")
        return run

    def out_of_time() -> bool:
        return (limits.wall_clock_s is not None
                and time.monotonic() - t0 > limits.wall_clock_s)

    for step in pipeline.steps:
        if cancel_event is not None and cancel_event.is_set():
            logger.info("run %s cancelled before step %s", run_id, step.name)
            return finish(RUN_CANCELLED, f"cancelled before step {step.name!r}")
        if out_of_time():
            return finish(RUN_TIMED_OUT,
                          f"wall clock limit {limits.wall_clock_s}s exceeded")
        if step_hook is not None:
            step_hook(step.name)
            if cancel_event is not None and cancel_event.is_set():
                return finish(RUN_CANCELLED, f"cancelled before step {step.name!r}")

        opdef = OPS.get(step.op)
        if opdef is None:
            run.step_results.append(StepResult(step.name, RUN_FAILED, 0.0,
                                               f"unknown op {step.op!r}"))
            return finish(RUN_FAILED, f"step {step.name!r}: unknown op {step.op!r}")

        step_dir = run_dir / "steps" / step.name
        in_dirs, out_dirs = [], []
        step_t0 = time.monotonic()
        try:
            params = substitute_params(step.params, config.values)
            for artifact in step.inputs:
                src = artifact_dirs.get(artifact)
                if src is None:
                    raise ValidationError(f"input artifact {artifact!r} not produced yet")
                dest = step_dir / "inputs" / artifact
                _copy_artifact(src, dest)
                in_dirs.append(dest)
            for artifact in step.outputs:
                dest = step_dir / "outputs" / artifact
                dest.mkdir(parents=True, exist_ok=True)
                out_dirs.append(dest)
            ctx = OpContext(params, in_dirs, out_dirs)
            step_metrics = opdef.fn(ctx)
            run.metrics.update(step_metrics)
            for artifact, out_dir in zip(step.outputs, out_dirs):
                final = artifacts_dir / artifact
                _copy_artifact(out_dir, final)
                artifact_dirs[artifact] = final
            run.step_results.append(StepResult(
                step.name, RUN_SUCCEEDED, time.monotonic() - step_t0, ctx.log_text()))
        except Exception as exc:  # a failing step fails the run, cleanly
            logger.warning("run %s failed at step %s: %s", run_id, step.name, exc)
            run.step_results.append(StepResult(
                step.name, RUN_FAILED, time.monotonic() - step_t0, str(exc)))
            return finish(RUN_FAILED, f"step {step.name!r}: {exc}")
        if out_of_time():
            return finish(RUN_TIMED_OUT,
                          f"wall clock limit {limits.wall_clock_s}s exceeded")

    serving_dir = artifact_dirs.get(serving.artifact)
    model_file = (serving_dir / "model.bin") if serving_dir else None
    if model_file is None or not model_file.exists():
        return finish(RUN_FAILED,
                      f"serving artifact {serving.artifact!r} was not produced")
    if not run.metrics:
        return finish(RUN_FAILED, "pipeline produced no metrics")

    run.model_artifact = store.put_artifact(
        MODELS_BUCKET, f"{model_id}/runs/{run_id}/model.bin", model_file.read_bytes())
    run.metrics_artifact = store.put_artifact(
        MODELS_BUCKET, f"{model_id}/runs/{run_id}/metrics.json",
        json.dumps(run.metrics, sort_keys=True, indent=1).encode())
    return finish(RUN_SUCCEEDED)


# ---------------------------------------------------------------------------
# Asynchronous run service
# ---------------------------------------------------------------------------


@dataclass
class _QueuedRun:
    run_id: str
    fn: Callable[[], TrainingRun]
    cancel_event: threading.Event


class ExecutorService:
    """FIFO run queue with a platform-wide concurrency cap.

    ``submit`` enqueues and returns immediately; completion is reported via
    the ``on_complete`` callback (the platform turns it into an event).
    """

    def __init__(self, store: Store, workspace: Path | str,
                 max_concurrent_runs: int = 2,
                 on_complete: Callable[[TrainingRun], None] | None = None,
                 step_hook: Callable[[str, str], None] | None = None):
        self.store = store
        self.workspace = Path(workspace)
        self.max_concurrent = max(1, max_concurrent_runs)
        self.on_complete = on_complete
        self.step_hook = step_hook
        self._queue: queue.Queue[_QueuedRun | None] = queue.Queue()
        self._runs: dict[str, TrainingRun] = {}
        self._cancels: dict[str, threading.Event] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._workers = [
            threading.Thread(target=self._worker, name=f"executor-{i}", daemon=True)
            for i in range(self.max_concurrent)
        ]
        for w in self._workers:
            w.start()

    def next_run_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"run-{self._counter:06d}"

    def set_run_counter_floor(self, floor: int) -> None:
        """After journal replay, keep new run ids above replayed ones."""
        with self._lock:
            self._counter = max(self._counter, floor)

    def submit(self, pipeline: PipelineSpec, config: ResolvedConfig,
               data: DatasetSnapshot, limits: ResourceLimits,
               serving: ServingSpec, model_id: str,
               run_id: str | None = None, started_at: float | None = None) -> str:
        run_id = run_id or self.next_run_id()
        cancel = threading.Event()
        with self._lock:
            self._runs[run_id] = TrainingRun(
                run_id=run_id, model_id=model_id,
                pipeline_digest=pipeline_digest(pipeline),
                started_at=started_at if started_at is not None else time.time(),
                snapshot_digest=data.digest,
            )
            self._cancels[run_id] = cancel

        hook = None
        if self.step_hook is not None:
            hook = lambda step_name: self.step_hook(run_id, step_name)  # noqa: E731

        def job() -> TrainingRun:
            return run_pipeline(
                pipeline, config, data, limits, self.store, serving,
                model_id=model_id, run_id=run_id, workspace=self.workspace,
                cancel_event=cancel, step_hook=hook, started_at=started_at,
            )

        self._queue.put(_QueuedRun(run_id, job, cancel))
        return run_id

    def _worker(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            try:
                run = item.fn()
            except Exception as exc:  # defensive: runner already catches step errors
                logger.exception("run %s crashed", item.run_id)
                run = self._runs[item.run_id]
                run.status = RUN_FAILED
                run.error = str(exc)
                run.finished_at = time.time()
            with self._lock:
                self._runs[item.run_id] = run
            if self.on_complete is not None:
                self.on_complete(run)

    def get_run(self, run_id: str) -> TrainingRun:
        with self._lock:
            run = self._runs.get(run_id)
        if run is None:
            raise NotFoundError(f"run {run_id} not found")
        return run

    def cancel_run(self, run_id: str) -> TrainingRun:
        """Cancel at the next step boundary; terminal runs are untouched."""
        with self._lock:
            run = self._runs.get(run_id)
            cancel = self._cancels.get(run_id)
        if run is None or cancel is None:
            raise NotFoundError(f"run {run_id} not found")
        if run.status == RUN_RUNNING:
            cancel.set()
        return run

    def shutdown(self) -> None:
        for _ in self._workers:
            self._queue.put(None)
        for w in self._workers:
            w.join(timeout=5)
