"""Demo assets: a synthetic work-order corpus generator and three shipped
template projects (failure-code recommendation, similarity suggestions,
approval recommendation).

The corpus trades realism for verifiability: every failure code owns a
distinct keyword vocabulary (so the text classifier is learnable by
construction) and the approval label follows a known linear rule on cost
and priority with a margin, so zero-noise corpora are exactly separable.
All sampling uses integer-only draws from one seeded PRNG, making corpora
bit-stable across platforms.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from pathlib import Path

import yaml

from .connectors import format_rfc3339
from .errors import ValidationError

ANCHOR_EPOCH = 1_767_225_600  # 2026-01-01T00:00:00Z; corpus timestamps trail it

SITES = ("SITE-A", "SITE-B", "SITE-C")
PRIORITIES = ("low", "medium", "high")
PRIORITY_WEIGHT = {"low": 1, "medium": 2, "high": 3}
FILLER_WORDS = ("unit", "check", "floor", "report", "urgent", "minor", "again")

# approval rule: approve iff cost + 1500 * priority_weight <= RULE_BOUNDARY,
# with costs resampled away from the boundary so the classes have a margin
RULE_BOUNDARY = 6000
RULE_MARGIN = 400

CSV_COLUMNS = ("id", "description", "site", "opened_at", "closed_at", "status",
               "cost", "priority", "failure_code", "approved")


def code_name(i: int) -> str:
    return f"FC-{i:03d}"


def code_keywords(i: int) -> list[str]:
    return [f"comp{i}", f"mode{i}", f"sign{i}"]


@dataclass
class WorkOrderRecord:
    id: str
    description: str
    site: str
    opened_at: int  # epoch seconds
    closed_at: int | None
    status: str  # open | closed | completed
    cost: int
    priority: str
    failure_code: str
    approved: bool

    def to_row(self) -> list[str]:
        return [
            self.id, self.description, self.site,
            format_rfc3339(self.opened_at),
            format_rfc3339(self.closed_at) if self.closed_at is not None else "",
            self.status, str(self.cost), self.priority, self.failure_code,
            "true" if self.approved else "false",
        ]


def generate_corpus(seed: int, n_rows: int, n_codes: int = 40,
                    approval_noise: float = 0.0) -> list[WorkOrderRecord]:
    """Deterministic synthetic work orders; every code occurs at least once."""
    if not 2 <= n_codes <= 200:
        raise ValidationError(f"n_codes must be in [2, 200], got {n_codes}")
    if n_rows < n_codes:
        raise ValidationError("n_rows must be >= n_codes so every code appears")
    if not 0.0 <= approval_noise <= 1.0:
        raise ValidationError("approval_noise must be in [0, 1]")

    rng = random.Random(seed)
    noise_millionths = int(round(approval_noise * 1_000_000))
    records = []
    for i in range(n_rows):
        code_idx = i if i < n_codes else rng.randrange(n_codes)
        keywords = code_keywords(code_idx)
        n_code_words = 2 + rng.randrange(3)
        words = [keywords[rng.randrange(len(keywords))] for _ in range(n_code_words)]
        for _ in range(1 + rng.randrange(2)):
            words.append(FILLER_WORDS[rng.randrange(len(FILLER_WORDS))])

        site = SITES[rng.randrange(len(SITES))]
        priority = PRIORITIES[rng.randrange(len(PRIORITIES))]
        weight = PRIORITY_WEIGHT[priority]
        cost = rng.randrange(100, 9001)
        while abs(cost + 1500 * weight - RULE_BOUNDARY) < RULE_MARGIN:
            cost = rng.randrange(100, 9001)
        approved = cost + 1500 * weight <= RULE_BOUNDARY
        if noise_millionths and rng.randrange(1_000_000) < noise_millionths:
            approved = not approved

        opened_at = ANCHOR_EPOCH - rng.randrange(0, 60 * 86400)
        status_draw = rng.randrange(100)
        if status_draw < 30:
            status, closed_at = "open", None
        else:
            status = "closed" if status_draw < 70 else "completed"
            closed_at = opened_at + rng.randrange(3600, 14 * 86400)

        records.append(WorkOrderRecord(
            id=f"WO-{i + 1:05d}",
            description=" ".join(words),
            site=site,
            opened_at=opened_at,
            closed_at=closed_at,
            status=status,
            cost=cost,
            priority=priority,
            failure_code=code_name(code_idx),
            approved=approved,
        ))
    return records


def corpus_csv_bytes(records: list[WorkOrderRecord]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.to_row())
    return out.getvalue().encode("utf-8")


def write_corpus_csv(path: str | Path, records: list[WorkOrderRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(corpus_csv_bytes(records))
    return path


# ---------------------------------------------------------------------------
# Template projects
# ---------------------------------------------------------------------------

_ALL_FOLDERS = ("kfp", "kserve", "template", "common", "third_party", "data",
                "examples", "hack", "research", "pretrained")


def _dump_yaml(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def _write_project(dest: Path, manifest: dict, pipeline: dict, serving: dict,
                   extras: dict[str, str] | None = None) -> Path:
    dest.mkdir(parents=True, exist_ok=True)
    for folder in _ALL_FOLDERS:
        (dest / folder).mkdir(exist_ok=True)
    (dest / "template" / "manifest.yaml").write_text(_dump_yaml(manifest), "utf-8")
    (dest / "kfp" / "pipeline.yaml").write_text(_dump_yaml(pipeline), "utf-8")
    (dest / "kserve" / "serving.yaml").write_text(_dump_yaml(serving), "utf-8")
    (dest / "Makefile").write_text(
        "# Packaging is driven by the platform CLI:\n"
        "#   modelforge template package .\n", "utf-8")
    (dest / "common" / "README.md").write_text(
        "Shared helpers would live here; packaged with the template.\n", "utf-8")
    (dest / "hack" / "local-notes.md").write_text(
        "Developer-local scratch space; never packaged.\n", "utf-8")
    for rel, content in (extras or {}).items():
        target = dest / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, "utf-8")
    return dest


def write_fcr_template(dest: str | Path, n_codes: int = 40) -> Path:
    """Multi-class failure-code recommendation over work-order text."""
    manifest = {
        "name": "fcr",
        "version": "1.0.0",
        "description": "Recommends a failure code from the work order description.",
        "inputs": [
            {"name": "description", "kind": "text", "required": True},
        ],
        "output": {"kind": "class-label",
                   "label_set": [code_name(i) for i in range(n_codes)]},
        "params": [
            {"name": "alpha_grid", "type": "string", "default": "0.1,0.5,1.0",
             "description": "comma-separated Laplace smoothing candidates"},
            {"name": "holdout_ratio", "type": "float", "default": 0.8},
            {"name": "seed", "type": "int", "default": 17},
        ],
        "resources": {"cpu_millis": 500, "memory_mb": 256},
        "approval_required": True,
    }
    pipeline = {"steps": [
        {"name": "load", "op": "connector.load",
         "inputs": ["dataset"], "outputs": ["data"]},
        {"name": "augment", "op": "augment.none",
         "inputs": ["data"], "outputs": ["augmented"]},
        {"name": "split", "op": "split.holdout",
         "params": {"ratio": "${holdout_ratio}", "seed": "${seed}"},
         "inputs": ["augmented"], "outputs": ["train", "holdout"]},
        {"name": "train", "op": "train.nb_grid",
         "params": {"alpha_grid": "${alpha_grid}", "text_field": "description",
                    "label_field": "label"},
         "inputs": ["train", "holdout"], "outputs": ["model"]},
        {"name": "evaluate", "op": "eval.classification",
         "params": {"label_field": "label"},
         "inputs": ["model", "holdout"], "outputs": ["report"]},
    ]}
    serving = {"model_kind": "nb-multinomial", "artifact": "model"}
    return _write_project(Path(dest), manifest, pipeline, serving)


def write_similarity_template(dest: str | Path) -> Path:
    """Similar-work-order retrieval with status and time-window controls."""
    manifest = {
        "name": "similarity",
        "version": "1.0.0",
        "description": "Finds similar work orders by text, status, and recency.",
        "inputs": [
            {"name": "description", "kind": "text", "required": True},
            {"name": "id", "kind": "identifier", "required": False},
            {"name": "timestamp", "kind": "timestamp", "required": False},
            {"name": "status", "kind": "categorical", "required": False},
            {"name": "as_of", "kind": "timestamp", "required": False},
        ],
        "output": {"kind": "ranked-list"},
        "params": [
            {"name": "compare_to", "type": "enum",
             "enum_values": ["open", "closed", "completed"], "default": "closed",
             "description": "which records to compare against"},
            {"name": "time_window_days", "type": "int", "default": 30},
            {"name": "top_k", "type": "int", "default": 5},
        ],
        "resources": {"cpu_millis": 250, "memory_mb": 128},
        "approval_required": True,
    }
    pipeline = {"steps": [
        {"name": "load", "op": "connector.load",
         "inputs": ["dataset"], "outputs": ["data"]},
        {"name": "index", "op": "index.tfidf",
         "params": {"text_field": "description", "id_field": "id",
                    "timestamp_field": "timestamp", "status_field": "status",
                    "compare_to": "${compare_to}",
                    "time_window_days": "${time_window_days}",
                    "top_k": "${top_k}"},
         "inputs": ["data"], "outputs": ["model"]},
    ]}
    serving = {"model_kind": "tfidf-knn", "artifact": "model"}
    return _write_project(Path(dest), manifest, pipeline, serving)


def write_approval_template(dest: str | Path) -> Path:
    """Binary approve/reject recommendation over tabular features."""
    manifest = {
        "name": "approval",
        "version": "1.0.0",
        "description": "Recommends approving or rejecting a work order.",
        "inputs": [
            {"name": "cost", "kind": "numeric", "required": True},
            {"name": "priority", "kind": "categorical", "required": True},
            {"name": "site", "kind": "categorical", "required": False},
        ],
        "output": {"kind": "score"},
        "params": [
            {"name": "lr_grid", "type": "string", "default": "0.1,0.5",
             "description": "comma-separated learning-rate candidates"},
            {"name": "iters", "type": "int", "default": 2000},
            {"name": "holdout_ratio", "type": "float", "default": 0.8},
            {"name": "seed", "type": "int", "default": 17},
        ],
        "resources": {"cpu_millis": 250, "memory_mb": 128},
        "approval_required": True,
    }
    pipeline = {"steps": [
        {"name": "load", "op": "connector.load",
         "inputs": ["dataset"], "outputs": ["data"]},
        {"name": "split", "op": "split.holdout",
         "params": {"ratio": "${holdout_ratio}", "seed": "${seed}"},
         "inputs": ["data"], "outputs": ["train", "holdout"]},
        {"name": "train", "op": "train.logreg",
         "params": {"lr_grid": "${lr_grid}", "iters": "${iters}",
                    "label_field": "label"},
         "inputs": ["train", "holdout"], "outputs": ["model"]},
        {"name": "evaluate", "op": "eval.classification",
         "params": {"label_field": "label"},
         "inputs": ["model", "holdout"], "outputs": ["report"]},
    ]}
    serving = {"model_kind": "logreg-binary", "artifact": "model"}
    return _write_project(Path(dest), manifest, pipeline, serving)


def scaffold_project(dest: str | Path, name: str = "hello-model") -> Path:
    """Boilerplate template project, valid by construction."""
    manifest = {
        "name": name,
        "version": "0.1.0",
        "description": "Starter template; replace the pipeline with your own.",
        "inputs": [{"name": "text", "kind": "text", "required": True}],
        "output": {"kind": "class-label", "label_set": ["yes", "no"]},
        "params": [
            {"name": "alpha_grid", "type": "string", "default": "1.0"},
            {"name": "holdout_ratio", "type": "float", "default": 0.8},
            {"name": "seed", "type": "int", "default": 17},
        ],
        "resources": {"cpu_millis": 100, "memory_mb": 64},
        "approval_required": True,
    }
    pipeline = {"steps": [
        {"name": "load", "op": "connector.load",
         "inputs": ["dataset"], "outputs": ["data"]},
        {"name": "split", "op": "split.holdout",
         "params": {"ratio": "${holdout_ratio}", "seed": "${seed}"},
         "inputs": ["data"], "outputs": ["train", "holdout"]},
        {"name": "train", "op": "train.nb_grid",
         "params": {"alpha_grid": "${alpha_grid}", "text_field": "text",
                    "label_field": "label"},
         "inputs": ["train", "holdout"], "outputs": ["model"]},
    ]}
    serving = {"model_kind": "nb-multinomial", "artifact": "model"}
    return _write_project(Path(dest), manifest, pipeline, serving)


def write_all_templates(root: str | Path) -> dict[str, Path]:
    root = Path(root)
    return {
        "fcr": write_fcr_template(root / "fcr"),
        "similarity": write_similarity_template(root / "similarity"),
        "approval": write_approval_template(root / "approval"),
    }


# ---------------------------------------------------------------------------
# Demo model configs
# ---------------------------------------------------------------------------


def demo_config(template: str, corpus_csv: str | Path, *,
                site: str | None = None, auto_approve: bool = False,
                params: dict | None = None,
                retrain_interval_s: float | None = None) -> dict:
    """A ready-to-use model config for one of the shipped templates."""
    connector: dict = {"kind": "csv-file", "location": str(corpus_csv)}
    if site is not None:
        connector["row_filter"] = f'site = "{site}"'
    base = {
        "params": dict(params or {}),
        "connector": connector,
        "auto_approve": auto_approve,
        "retrain_interval_s": retrain_interval_s,
    }
    if template == "fcr":
        base["inputs"] = {"description": "description"}
        base["label"] = "failure_code"
    elif template == "similarity":
        base["inputs"] = {"description": "description", "id": "id",
                          "timestamp": "opened_at", "status": "status"}
        base["label"] = None
    elif template == "approval":
        base["inputs"] = {"cost": "cost", "priority": "priority", "site": "site"}
        base["label"] = "approved"
    else:
        raise ValidationError(f"unknown demo template {template!r}")
    return base
