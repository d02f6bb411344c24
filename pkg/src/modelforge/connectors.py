"""Data connectors: fetch client data into canonical dataset snapshots.

A snapshot is the platform's standard data format: an ordered schema of
(name, kind) fields plus string-valued rows, canonically serialized as a
schema line followed by RFC 4180 rows (LF, UTF-8) and content-addressed by
the SHA-256 of those bytes.  Connectors select and rename columns, apply a
conjunctive row filter, and optionally keep only rows inside a trailing
time window.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from hashlib import sha256
from pathlib import Path

from .errors import NotFoundError, ValidationError
from .store import Store

logger = logging.getLogger(__name__)

CONNECTOR_KINDS = ("csv-file", "jsonl-file", "http-csv")
DATASET_BUCKET = "datasets"

SCHEMA_FILENAME = "schema.json"
DATA_FILENAME = "data.csv"


# ---------------------------------------------------------------------------
# Value parsing
# ---------------------------------------------------------------------------


def parse_rfc3339(text: str) -> float:
    """RFC 3339 timestamp to epoch seconds; naive times are taken as UTC."""
    t = text.strip()
    if not t:
        raise ValidationError("empty timestamp")
    try:
        dt = datetime.fromisoformat(t.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {text!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_rfc3339(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _check_cell(value: str, kind: str) -> bool:
    if kind == "numeric":
        try:
            return math.isfinite(float(value))
        except ValueError:
            return False
    if kind == "timestamp":
        try:
            parse_rfc3339(value)
            return True
        except ValidationError:
            return False
    return True  # text / categorical / identifier accept any string


# ---------------------------------------------------------------------------
# Row filter: conjunctions of `field op literal`
# ---------------------------------------------------------------------------

_FILTER_TOKEN = re.compile(
    r"""\s*(?:(?P<and>and\b)|(?P<field>[A-Za-z_][A-Za-z0-9_.-]*)\s*"""
    r"""(?P<op>!=|>=|<=|=|<|>|≠|≤|≥)\s*"""
    r"""(?P<lit>"[^"]*"|'[^']*'|[^\s]+))\s*""",
    re.IGNORECASE,
)

_OP_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">="}


@dataclass(frozen=True)
class FilterClause:
    field: str
    op: str
    literal: str | float


def parse_row_filter(expr: str) -> list[FilterClause]:
    """Parse `field op literal [and ...]`; returns the conjunct clauses."""
    clauses: list[FilterClause] = []
    pos = 0
    expect_cond = True
    while pos < len(expr):
        m = _FILTER_TOKEN.match(expr, pos)
        if not m:
            raise ValidationError(f"cannot parse row filter at: {expr[pos:]!r}")
        pos = m.end()
        if m.group("and"):
            if expect_cond:
                raise ValidationError("row filter: dangling 'and'")
            expect_cond = True
            continue
        if not expect_cond:
            raise ValidationError("row filter: conditions must be joined with 'and'")
        op = _OP_ALIASES.get(m.group("op"), m.group("op"))
        raw = m.group("lit")
        literal: str | float
        if raw[0] in "\"'":
            literal = raw[1:-1]
        else:
            try:
                literal = float(raw)
            except ValueError:
                literal = raw
        clauses.append(FilterClause(m.group("field"), op, literal))
        expect_cond = False
    if expect_cond:
        raise ValidationError("row filter: empty or trailing 'and'")
    return clauses


def _clause_matches(clause: FilterClause, row: dict[str, str]) -> bool:
    value = row.get(clause.field, "")
    if isinstance(clause.literal, float):
        try:
            left: float | str = float(value)
        except ValueError:
            return False
        right: float | str = clause.literal
    else:
        left, right = value, clause.literal
    if clause.op == "=":
        return left == right
    if clause.op == "!=":
        return left != right
    if clause.op == "<":
        return left < right
    if clause.op == "<=":
        return left <= right
    if clause.op == ">":
        return left > right
    if clause.op == ">=":
        return left >= right
    raise ValidationError(f"unknown operator {clause.op!r}")


# ---------------------------------------------------------------------------
# Connector spec and snapshot
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectField:
    source: str
    target: str
    kind: str = "text"


@dataclass
class ConnectorSpec:
    kind: str
    location: str
    select: list[SelectField]
    row_filter: str | None = None
    time_window: tuple[str, int] | None = None  # (source timestamp field, window days)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONNECTOR_KINDS:
            raise ValidationError(f"unknown connector kind {self.kind!r}")
        targets = [s.target for s in self.select]
        if len(set(targets)) != len(targets):
            raise ValidationError("select mappings must have unique target fields")
        if self.time_window is not None and self.time_window[1] <= 0:
            raise ValidationError("window_days must be positive")


@dataclass
class DatasetSnapshot:
    schema: list[tuple[str, str]]  # (name, kind), ordered
    rows: list[list[str]]
    digest: str
    fetched_at: float
    rows_rejected: int = 0
    as_of: float | None = None

    @property
    def row_count(self) -> int:
        return len(self.rows)

    @property
    def empty(self) -> bool:
        return not self.rows

    def field_names(self) -> list[str]:
        return [name for name, _ in self.schema]

    def column(self, name: str) -> list[str]:
        idx = self.field_names().index(name)
        return [row[idx] for row in self.rows]

    def rows_as_dicts(self) -> list[dict[str, str]]:
        names = self.field_names()
        return [dict(zip(names, row)) for row in self.rows]


def _csv_cell(value: str) -> str:
    # RFC 4180 quoting, applied deterministically (incl. bare CR)
    if any(ch in value for ch in (",", '"', "\n", "\r")):
        return '"' + value.replace('"', '""') + '"'
    return value


def canonical_bytes(schema: list[tuple[str, str]], rows: list[list[str]]) -> bytes:
    """Schema line + RFC 4180 rows, LF line endings, UTF-8; order-preserving."""
    out = io.StringIO()
    out.write(",".join(f"{name}:{kind}" for name, kind in schema))
    out.write("\n")
    for row in rows:
        out.write(",".join(_csv_cell(cell) for cell in row))
        out.write("\n")
    return out.getvalue().encode("utf-8")


def snapshot_digest(snapshot: DatasetSnapshot) -> str:
    return sha256(canonical_bytes(snapshot.schema, snapshot.rows)).hexdigest()


def make_snapshot(schema: list[tuple[str, str]], rows: list[list[str]],
                  fetched_at: float, rows_rejected: int = 0,
                  as_of: float | None = None) -> DatasetSnapshot:
    for row in rows:
        if len(row) != len(schema):
            raise ValidationError(
                f"row arity {len(row)} does not match schema arity {len(schema)}"
            )
        if any("\x00" in cell for cell in row):
            raise ValidationError("cells must not contain NUL bytes")
    snap = DatasetSnapshot(schema=list(schema), rows=[list(r) for r in rows],
                           digest="", fetched_at=fetched_at,
                           rows_rejected=rows_rejected, as_of=as_of)
    snap.digest = snapshot_digest(snap)
    return snap


def parse_canonical(data: bytes, fetched_at: float = 0.0) -> DatasetSnapshot:
    """Inverse of ``canonical_bytes``."""
    text = data.decode("utf-8")
    head, _, body = text.partition("\n")
    schema = []
    for part in head.split(","):
        name, _, kind = part.partition(":")
        if not name or not kind:
            raise ValidationError(f"bad schema line entry {part!r}")
        schema.append((name, kind))
    rows = [row for row in csv.reader(io.StringIO(body))]
    return make_snapshot(schema, rows, fetched_at)


# ---------------------------------------------------------------------------
# Fetch
# ---------------------------------------------------------------------------


def _read_source_rows(spec: ConnectorSpec) -> tuple[list[str], list[dict[str, str]]]:
    """Returns (source header, source rows as dicts of strings)."""
    if spec.kind == "csv-file":
        path = Path(spec.location)
        if not path.exists():
            raise NotFoundError(f"source file not found: {path}")
        text = path.read_text("utf-8")
        return _rows_from_csv_text(text, str(path))
    if spec.kind == "jsonl-file":
        path = Path(spec.location)
        if not path.exists():
            raise NotFoundError(f"source file not found: {path}")
        header: list[str] = []
        rows = []
        for i, line in enumerate(path.read_text("utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{i + 1}: bad JSON line: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{i + 1}: JSONL rows must be objects")
            for k in obj:
                if k not in header:
                    header.append(k)
            rows.append({k: _cell_str(v) for k, v in obj.items()})
        return header, rows
    if spec.kind == "http-csv":
        headers = dict(spec.options.get("headers") or {})
        req = urllib.request.Request(spec.location, headers=headers)
        try:
            with urllib.request.urlopen(req, timeout=30) as resp:
                text = resp.read().decode("utf-8")
        except OSError as exc:
            raise NotFoundError(f"cannot reach {spec.location}: {exc}") from exc
        return _rows_from_csv_text(text, spec.location)
    raise ValidationError(f"unknown connector kind {spec.kind!r}")


def _cell_str(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _rows_from_csv_text(text: str, source: str) -> tuple[list[str], list[dict[str, str]]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"{source}: empty CSV source") from None
    rows = []
    for i, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(
                f"{source}: row {i + 2} has {len(row)} cells, header has {len(header)}"
            )
        rows.append(dict(zip(header, row)))
    return header, rows


def fetch(spec: ConnectorSpec, as_of: float) -> DatasetSnapshot:
    """Fetch, filter, window, select, and kind-check rows into a snapshot.

    Rows with unparseable cells are dropped and counted; the fetch fails
    only when more than half of the candidate rows were rejected.
    """
    header, source_rows = _read_source_rows(spec)
    header_set = set(header)

    missing = [s.source for s in spec.select if s.source not in header_set]
    if missing:
        raise ValidationError(f"source is missing mapped column(s): {', '.join(missing)}")

    clauses = parse_row_filter(spec.row_filter) if spec.row_filter else []
    for clause in clauses:
        if clause.field not in header_set:
            raise ValidationError(f"row filter references unknown column {clause.field!r}")
    if spec.time_window and spec.time_window[0] not in header_set:
        raise ValidationError(
            f"time window references unknown column {spec.time_window[0]!r}"
        )

    schema = [(s.target, s.kind) for s in spec.select]
    rows: list[list[str]] = []
    rejected = 0
    candidates = 0
    for src in source_rows:
        if clauses and not all(_clause_matches(c, src) for c in clauses):
            continue
        candidates += 1
        if spec.time_window:
            ts_field, days = spec.time_window
            try:
                ts = parse_rfc3339(src.get(ts_field, ""))
            except ValidationError:
                rejected += 1
                continue
            if not (as_of - days * 86400.0 <= ts <= as_of):
                candidates -= 1
                continue
        cells = [src.get(s.source, "") for s in spec.select]
        if any(not _check_cell(c, s.kind) for c, s in zip(cells, spec.select)):
            rejected += 1
            continue
        rows.append(cells)

    if candidates > 0 and rejected / candidates > 0.5:
        raise ValidationError(
            f"rejected {rejected}/{candidates} rows; source data quality too poor"
        )
    snap = make_snapshot(schema, rows, fetched_at=as_of, rows_rejected=rejected,
                         as_of=as_of)
    logger.info("fetched %d row(s) (%d rejected) from %s", snap.row_count,
                rejected, spec.location)
    return snap


# ---------------------------------------------------------------------------
# Snapshot persistence in the artifact store
# ---------------------------------------------------------------------------


def persist_snapshot(store: Store, model_id: str, snapshot: DatasetSnapshot) -> str:
    """Store a snapshot under datasets/<model_id>/<digest>/; idempotent."""
    prefix = f"{model_id}/{snapshot.digest}"
    if not store.has_artifact(DATASET_BUCKET, f"{prefix}/{DATA_FILENAME}"):
        schema_doc = {
            "fields": [{"name": n, "kind": k} for n, k in snapshot.schema],
            "row_count": snapshot.row_count,
            "rows_rejected": snapshot.rows_rejected,
            "fetched_at": snapshot.fetched_at,
            "as_of": snapshot.as_of,
            "digest": snapshot.digest,
        }
        store.put_artifact(DATASET_BUCKET, f"{prefix}/{SCHEMA_FILENAME}",
                           json.dumps(schema_doc, sort_keys=True, indent=1).encode())
        store.put_artifact(DATASET_BUCKET, f"{prefix}/{DATA_FILENAME}",
                           canonical_bytes(snapshot.schema, snapshot.rows))
    return snapshot.digest


def load_snapshot(store: Store, model_id: str, digest: str) -> DatasetSnapshot:
    schema_doc = json.loads(store.get_bytes(DATASET_BUCKET,
                                            f"{model_id}/{digest}/{SCHEMA_FILENAME}"))
    data = store.get_bytes(DATASET_BUCKET, f"{model_id}/{digest}/{DATA_FILENAME}")
    snap = parse_canonical(data, fetched_at=schema_doc.get("fetched_at", 0.0))
    snap.rows_rejected = schema_doc.get("rows_rejected", 0)
    snap.as_of = schema_doc.get("as_of")
    if snap.digest != digest:
        raise ValidationError(f"snapshot digest mismatch for {model_id}/{digest}")
    return snap
