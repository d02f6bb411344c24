"""Model templates: the immutable transportable unit.

A template project is a directory tree with three declarative files
(``template/manifest.yaml``, ``kfp/pipeline.yaml``, ``kserve/serving.yaml``)
plus optional library folders.  This module validates the layout, packages
the packageable subset into a canonical gzip'd tar (``.tmpl.tgz``) with a
reproducible digest, unpacks archives safely, and resolves a template's
declared parameters against a user-supplied model configuration.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import os
import re
import tarfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import IntegrityError, ValidationError

NAME_RE = re.compile(r"^[a-z][a-z0-9-]{1,62}$")
IDENT_RE = re.compile(r"^[a-z][a-z0-9_-]*$")
PARAM_REF_RE = re.compile(r"^\$\{([a-z][a-z0-9_-]*)\}$")

INPUT_KINDS = ("text", "categorical", "numeric", "timestamp", "identifier")
OUTPUT_KINDS = ("class-label", "score", "ranked-list")
PARAM_TYPES = ("string", "int", "float", "bool", "enum")
MODEL_KINDS = ("majority", "nb-multinomial", "logreg-binary", "tfidf-knn")

RESERVED_DATASET = "dataset"

# Listing order of a template project; only the first five prefixes package.
LAYOUT_ENTRIES: list[tuple[str, bool]] = [
    ("kfp", True),
    ("kserve", True),
    ("template", True),
    ("common", False),
    ("third_party", False),
    ("data", False),
    ("examples", False),
    ("hack", False),
    ("research", False),
    ("pretrained", False),
    ("Makefile", False),
]
PACKAGED_PREFIXES = ("template/", "kfp/", "kserve/", "common/", "third_party/")
MANIFEST_PATH = "template/manifest.yaml"
PIPELINE_PATH = "kfp/pipeline.yaml"
SERVING_PATH = "kserve/serving.yaml"
ARCHIVE_SUFFIX = ".tmpl.tgz"


# ---------------------------------------------------------------------------
# Semver
# ---------------------------------------------------------------------------

_SEMVER_RE = re.compile(
    r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)"
    r"(?:-([0-9A-Za-z.-]+))?(?:\+[0-9A-Za-z.-]+)?$"
)


@dataclass(frozen=True)
class SemVer:
    major: int
    minor: int
    patch: int
    prerelease: tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "SemVer":
        m = _SEMVER_RE.match(text)
        if not m:
            raise ValidationError(f"not a semver version: {text!r}")
        pre = tuple(m.group(4).split(".")) if m.group(4) else ()
        return cls(int(m.group(1)), int(m.group(2)), int(m.group(3)), pre)

    def sort_key(self):
        # releases sort above any pre-release of the same triple
        pre_key = ((1,) if not self.prerelease else
                   (0,) + tuple((0, int(p)) if p.isdigit() else (1, p) for p in self.prerelease))
        return (self.major, self.minor, self.patch, pre_key)


def semver_key(version: str):
    return SemVer.parse(version).sort_key()


# ---------------------------------------------------------------------------
# Manifest / pipeline / serving types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputFieldSpec:
    name: str
    kind: str
    required: bool = True


@dataclass(frozen=True)
class OutputSpec:
    kind: str
    label_set: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ConfigParamSpec:
    name: str
    type: str
    default: object | None = None
    enum_values: tuple[str, ...] | None = None
    description: str = ""
    required: bool = False


@dataclass(frozen=True)
class ResourceMinimums:
    cpu_millis: int = 0
    memory_mb: int = 0


@dataclass(frozen=True)
class TemplateManifest:
    name: str
    version: str
    description: str
    inputs: tuple[InputFieldSpec, ...]
    output: OutputSpec
    params: tuple[ConfigParamSpec, ...]
    resources: ResourceMinimums
    approval_required: bool = True

    def param(self, name: str) -> ConfigParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def input_field(self, name: str) -> InputFieldSpec | None:
        for i in self.inputs:
            if i.name == name:
                return i
        return None


@dataclass(frozen=True)
class StepSpec:
    name: str
    op: str
    params: dict[str, object] = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineSpec:
    steps: tuple[StepSpec, ...]


@dataclass(frozen=True)
class ServingSpec:
    model_kind: str
    artifact: str


@dataclass(frozen=True)
class TemplateArchive:
    data: bytes  # gzip-compressed canonical tar
    digest: str  # SHA-256 hex of the uncompressed tar
    manifest: TemplateManifest


# ---------------------------------------------------------------------------
# YAML subset loading
# ---------------------------------------------------------------------------


def load_yaml_subset(text: str, source: str = "<yaml>") -> object:
    """safe_load restricted to the anchor-free, tag-free subset."""
    try:
        for event in yaml.parse(text):
            if getattr(event, "anchor", None) is not None:
                raise ValidationError(f"{source}: YAML anchors/aliases are not allowed")
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ValidationError(f"{where}: YAML parse error: {exc}") from exc


def _require(mapping: dict, key: str, source: str):
    if key not in mapping:
        raise ValidationError(f"{source}: missing required key {key!r}")
    return mapping[key]


def _typed_value(value, ptype: str, pname: str, enum_values=None):
    """Check/coerce a config value against a declared param type."""
    ok = False
    if ptype == "string":
        ok = isinstance(value, str)
    elif ptype == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif ptype == "float":
        if isinstance(value, bool):
            ok = False
        elif isinstance(value, (int, float)):
            value, ok = float(value), True
    elif ptype == "bool":
        ok = isinstance(value, bool)
    elif ptype == "enum":
        ok = isinstance(value, str) and (enum_values is None or value in enum_values)
    if not ok:
        raise ValidationError(
            f"param {pname!r}: value {value!r} does not match type {ptype}",
            detail=[{"param": pname, "type": ptype, "value": repr(value)}],
        )
    return value


def parse_manifest(doc: object, source: str = MANIFEST_PATH) -> TemplateManifest:
    if not isinstance(doc, dict):
        raise ValidationError(f"{source}: manifest must be a mapping")
    name = _require(doc, "name", source)
    if not isinstance(name, str) or not NAME_RE.match(name):
        raise ValidationError(f"{source}: invalid template name {name!r}")
    version = str(_require(doc, "version", source))
    SemVer.parse(version)

    inputs = []
    for item in _require(doc, "inputs", source) or []:
        kind = _require(item, "kind", source)
        if kind not in INPUT_KINDS:
            raise ValidationError(f"{source}: unknown input kind {kind!r}")
        fname = _require(item, "name", source)
        if not IDENT_RE.match(str(fname)):
            raise ValidationError(f"{source}: invalid input field name {fname!r}")
        inputs.append(InputFieldSpec(fname, kind, bool(item.get("required", True))))
    if len({i.name for i in inputs}) != len(inputs):
        raise ValidationError(f"{source}: duplicate input field names")

    out = _require(doc, "output", source)
    okind = _require(out, "kind", source)
    if okind not in OUTPUT_KINDS:
        raise ValidationError(f"{source}: unknown output kind {okind!r}")
    label_set = tuple(str(v) for v in out["label_set"]) if out.get("label_set") else None
    if okind == "class-label" and not label_set:
        raise ValidationError(f"{source}: class-label output requires a nonempty label_set")

    params = []
    for item in doc.get("params") or []:
        pname = _require(item, "name", source)
        if not IDENT_RE.match(str(pname)):
            raise ValidationError(f"{source}: invalid param name {pname!r}")
        ptype = _require(item, "type", source)
        if ptype not in PARAM_TYPES:
            raise ValidationError(f"{source}: unknown param type {ptype!r}")
        enum_values = tuple(str(v) for v in item["enum_values"]) if item.get("enum_values") else None
        if ptype == "enum" and not enum_values:
            raise ValidationError(f"{source}: enum param {pname!r} requires enum_values")
        default = item.get("default")
        if default is not None:
            default = _typed_value(default, ptype, str(pname), enum_values)
        params.append(ConfigParamSpec(
            name=pname, type=ptype, default=default, enum_values=enum_values,
            description=str(item.get("description", "")),
            required=bool(item.get("required", False)),
        ))
    if len({p.name for p in params}) != len(params):
        raise ValidationError(f"{source}: duplicate param names")

    res = doc.get("resources") or {}
    cpu = int(res.get("cpu_millis", 0))
    mem = int(res.get("memory_mb", 0))
    if cpu < 0 or mem < 0:
        raise ValidationError(f"{source}: resource minimums must be >= 0")

    return TemplateManifest(
        name=name, version=version, description=str(doc.get("description", "")),
        inputs=tuple(inputs), output=OutputSpec(okind, label_set),
        params=tuple(params), resources=ResourceMinimums(cpu, mem),
        approval_required=bool(doc.get("approval_required", True)),
    )


def parse_pipeline(doc: object, source: str = PIPELINE_PATH) -> PipelineSpec:
    if not isinstance(doc, dict) or not isinstance(doc.get("steps"), list):
        raise ValidationError(f"{source}: pipeline must have a steps list")
    steps = []
    for item in doc["steps"]:
        sname = str(_require(item, "name", source))
        if not IDENT_RE.match(sname):
            raise ValidationError(f"{source}: invalid step name {sname!r}")
        steps.append(StepSpec(
            name=sname,
            op=str(_require(item, "op", source)),
            params=dict(item.get("params") or {}),
            inputs=tuple(str(x) for x in item.get("inputs") or ()),
            outputs=tuple(str(x) for x in item.get("outputs") or ()),
        ))
    if not steps:
        raise ValidationError(f"{source}: pipeline needs at least one step")
    return PipelineSpec(steps=tuple(steps))


def parse_serving(doc: object, source: str = SERVING_PATH) -> ServingSpec:
    if not isinstance(doc, dict):
        raise ValidationError(f"{source}: serving spec must be a mapping")
    kind = _require(doc, "model_kind", source)
    if kind not in MODEL_KINDS:
        raise ValidationError(f"{source}: unknown model_kind {kind!r}")
    return ServingSpec(model_kind=kind, artifact=str(_require(doc, "artifact", source)))


# ---------------------------------------------------------------------------
# Cross-validation of the three specs
# ---------------------------------------------------------------------------


def param_references(pipeline: PipelineSpec) -> set[str]:
    refs = set()
    for step in pipeline.steps:
        for value in step.params.values():
            if isinstance(value, str):
                m = PARAM_REF_RE.match(value)
                if m:
                    refs.add(m.group(1))
    return refs


def cross_validate(manifest: TemplateManifest, pipeline: PipelineSpec,
                   serving: ServingSpec) -> list[str]:
    """Structural checks spanning the three specs; returns diagnostics."""
    problems: list[str] = []
    names = [s.name for s in pipeline.steps]
    if len(set(names)) != len(names):
        problems.append(f"{PIPELINE_PATH}: duplicate step names")

    from .executor import registered_op_ids  # static registry; no import cycle at call time
    known_ops = registered_op_ids()

    available = {RESERVED_DATASET}
    all_outputs: set[str] = set()
    for step in pipeline.steps:
        if step.op not in known_ops:
            problems.append(f"{PIPELINE_PATH}: step {step.name!r} uses unknown op {step.op!r}")
        for artifact in step.inputs:
            if artifact not in available:
                problems.append(
                    f"{PIPELINE_PATH}: step {step.name!r} input {artifact!r} is not "
                    f"'dataset' or an earlier step's output"
                )
        for artifact in step.outputs:
            if artifact in all_outputs:
                problems.append(f"{PIPELINE_PATH}: output artifact {artifact!r} produced twice")
            all_outputs.add(artifact)
            available.add(artifact)

    declared = {p.name for p in manifest.params}
    for ref in sorted(param_references(pipeline)):
        if ref not in declared:
            problems.append(
                f"{PIPELINE_PATH}: dangling reference ${{{ref}}} names no declared param"
            )

    if serving.artifact not in all_outputs:
        problems.append(
            f"{SERVING_PATH}: serving artifact {serving.artifact!r} is not produced by any step"
        )
    return problems


# ---------------------------------------------------------------------------
# Layout validation
# ---------------------------------------------------------------------------


@dataclass
class LayoutEntry:
    path: str
    required: bool
    present: bool


@dataclass
class ValidationReport:
    entries: list[LayoutEntry]
    problems: list[str]
    manifest: TemplateManifest | None = None
    pipeline: PipelineSpec | None = None
    serving: ServingSpec | None = None

    @property
    def ok(self) -> bool:
        return (not self.problems
                and all(e.present for e in self.entries if e.required))

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            flag = "present" if e.present else ("MISSING" if e.required else "absent")
            req = "required" if e.required else "optional"
            lines.append(f"{e.path}: {flag} ({req})")
        lines.extend(self.problems)
        lines.append("ok" if self.ok else "INVALID")
        return "\n".join(lines)


def _parse_project_file(root: Path, rel: str, parser, report: ValidationReport):
    path = root / rel
    if not path.is_file():
        report.problems.append(f"{rel}: file missing")
        return None
    try:
        doc = load_yaml_subset(path.read_text("utf-8"), source=rel)
        return parser(doc, source=rel)
    except ValidationError as exc:
        report.problems.append(str(exc))
        return None


def validate_layout(project_dir: str | os.PathLike) -> ValidationReport:
    """Check a template project against the expected layout and parse the
    three declarative files, cross-validating them."""
    root = Path(project_dir)
    if not root.exists():
        raise OSError(f"project directory does not exist: {root}")
    if not root.is_dir():
        raise OSError(f"not a directory: {root}")

    entries = [LayoutEntry(name, required, (root / name).exists())
               for name, required in LAYOUT_ENTRIES]
    report = ValidationReport(entries=entries, problems=[])

    report.manifest = _parse_project_file(root, MANIFEST_PATH, parse_manifest, report)
    report.pipeline = _parse_project_file(root, PIPELINE_PATH, parse_pipeline, report)
    report.serving = _parse_project_file(root, SERVING_PATH, parse_serving, report)

    if report.manifest and report.pipeline and report.serving:
        report.problems.extend(cross_validate(report.manifest, report.pipeline, report.serving))
    return report


# ---------------------------------------------------------------------------
# Packaging
# ---------------------------------------------------------------------------


def _canonical_tar(members: list[tuple[str, bytes]]) -> bytes:
    """Fixed entry order, zeroed timestamps/ownership: equal trees, equal bytes."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for name, data in sorted(members):
            info = tarfile.TarInfo(name=name)
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            info.mode = 0o644
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def package(project_dir: str | os.PathLike) -> TemplateArchive:
    """Package the packageable subset of a validated project.

    Only ``template/``, ``kfp/``, ``kserve/``, ``common/`` and
    ``third_party/`` entries are collected; developer-local folders
    (data, examples, hack, research, pretrained) never ship.
    """
    report = validate_layout(project_dir)
    if not report.ok:
        raise ValidationError("project failed layout validation", report=report)
    root = Path(project_dir)
    members: list[tuple[str, bytes]] = []
    for prefix in PACKAGED_PREFIXES:
        base = root / prefix.rstrip("/")
        if not base.exists():
            continue
        for path in sorted(base.rglob("*")):
            if path.is_file():
                rel = path.relative_to(root).as_posix()
                members.append((rel, path.read_bytes()))
    tar_bytes = _canonical_tar(members)
    digest = hashlib.sha256(tar_bytes).hexdigest()
    gz = io.BytesIO()
    with gzip.GzipFile(fileobj=gz, mode="wb", mtime=0) as zf:
        zf.write(tar_bytes)
    return TemplateArchive(data=gz.getvalue(), digest=digest, manifest=report.manifest)


def archive_digest(archive_bytes: bytes) -> str:
    """Digest of the uncompressed canonical tar inside a .tmpl.tgz."""
    return hashlib.sha256(gzip.decompress(archive_bytes)).hexdigest()


def read_archive(archive_bytes: bytes) -> TemplateArchive:
    """Parse archive bytes back into a TemplateArchive, verifying structure."""
    tar_bytes = gzip.decompress(archive_bytes)
    digest = hashlib.sha256(tar_bytes).hexdigest()
    manifest_text = _archive_member(tar_bytes, MANIFEST_PATH)
    manifest = parse_manifest(load_yaml_subset(manifest_text, MANIFEST_PATH))
    return TemplateArchive(data=archive_bytes, digest=digest, manifest=manifest)


def _archive_member(tar_bytes: bytes, name: str) -> str:
    with tarfile.open(fileobj=io.BytesIO(tar_bytes)) as tar:
        try:
            member = tar.extractfile(name)
        except KeyError:
            member = None
        if member is None:
            raise ValidationError(f"archive is missing {name}")
        return member.read().decode("utf-8")


def archive_specs(archive: TemplateArchive) -> tuple[TemplateManifest, PipelineSpec, ServingSpec]:
    """Parse manifest, pipeline and serving specs out of an archive."""
    tar_bytes = gzip.decompress(archive.data)
    manifest = parse_manifest(load_yaml_subset(_archive_member(tar_bytes, MANIFEST_PATH), MANIFEST_PATH))
    pipeline = parse_pipeline(load_yaml_subset(_archive_member(tar_bytes, PIPELINE_PATH), PIPELINE_PATH))
    serving = parse_serving(load_yaml_subset(_archive_member(tar_bytes, SERVING_PATH), SERVING_PATH))
    problems = cross_validate(manifest, pipeline, serving)
    if problems:
        raise ValidationError("archive specs failed cross-validation: " + "; ".join(problems))
    return manifest, pipeline, serving


def unpack(archive: TemplateArchive, dest_dir: str | os.PathLike) -> TemplateManifest:
    """Extract an archive, verifying its digest and refusing path traversal."""
    tar_bytes = gzip.decompress(archive.data)
    actual = hashlib.sha256(tar_bytes).hexdigest()
    if actual != archive.digest:
        raise IntegrityError(
            f"archive digest mismatch: expected {archive.digest}, got {actual}"
        )
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    dest_resolved = dest.resolve()
    with tarfile.open(fileobj=io.BytesIO(tar_bytes)) as tar:
        for member in tar.getmembers():
            name = member.name
            if name.startswith("/") or name.startswith("\\"):
                raise IntegrityError(f"unsafe absolute path in archive: {name!r}")
            target = (dest / name)
            if not target.resolve().is_relative_to(dest_resolved):
                raise IntegrityError(f"archive entry escapes destination: {name!r}")
            if not member.isfile():
                continue
            target.parent.mkdir(parents=True, exist_ok=True)
            extracted = tar.extractfile(member)
            assert extracted is not None
            target.write_bytes(extracted.read())
    manifest_text = (dest / MANIFEST_PATH).read_text("utf-8")
    return parse_manifest(load_yaml_subset(manifest_text, MANIFEST_PATH))


# ---------------------------------------------------------------------------
# Model configuration and merge
# ---------------------------------------------------------------------------


@dataclass
class ConnectorBinding:
    """Data-connection half of a model config."""

    kind: str
    location: str
    row_filter: str | None = None
    timestamp_field: str | None = None
    window_days: int | None = None
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "location": self.location,
            "row_filter": self.row_filter, "timestamp_field": self.timestamp_field,
            "window_days": self.window_days, "options": dict(self.options),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConnectorBinding":
        if "kind" not in doc or "location" not in doc:
            raise ValidationError("connector binding needs 'kind' and 'location'")
        window_days = doc.get("window_days")
        if window_days is not None:
            window_days = int(window_days)
            if window_days <= 0:
                raise ValidationError("window_days must be positive")
        return cls(
            kind=str(doc["kind"]), location=str(doc["location"]),
            row_filter=doc.get("row_filter"),
            timestamp_field=doc.get("timestamp_field"),
            window_days=window_days,
            options=dict(doc.get("options") or {}),
        )


@dataclass
class ModelConfig:
    """Business-level configuration used to instantiate a template."""

    params: dict[str, object] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)  # input field -> source column
    label: str | None = None  # source column holding the training target
    connector: ConnectorBinding | None = None
    resources: dict[str, int] = field(default_factory=dict)
    auto_approve: bool = False
    retrain_interval_s: float | None = None

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "inputs": dict(self.inputs),
            "label": self.label,
            "connector": self.connector.to_dict() if self.connector else None,
            "resources": dict(self.resources),
            "auto_approve": self.auto_approve,
            "retrain_interval_s": self.retrain_interval_s,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        if not isinstance(doc, dict):
            raise ValidationError("model config must be a mapping")
        connector = doc.get("connector")
        interval = doc.get("retrain_interval_s")
        return cls(
            params=dict(doc.get("params") or {}),
            inputs={str(k): str(v) for k, v in (doc.get("inputs") or {}).items()},
            label=doc.get("label"),
            connector=ConnectorBinding.from_dict(connector) if connector else None,
            resources={str(k): int(v) for k, v in (doc.get("resources") or {}).items()},
            auto_approve=bool(doc.get("auto_approve", False)),
            retrain_interval_s=float(interval) if interval is not None else None,
        )


@dataclass
class ResolvedConfig:
    """Every declared param bound to a value, plus the validated data bindings."""

    values: dict[str, object]
    inputs: dict[str, str]
    label: str | None

    def to_dict(self) -> dict:
        return {"values": dict(self.values), "inputs": dict(self.inputs), "label": self.label}


def merge_config(manifest: TemplateManifest, config: ModelConfig) -> ResolvedConfig:
    """Resolve supplied values against declared params, filling defaults.

    Fails on unknown names, type mismatches, required params with neither a
    value nor a default, and input mappings that omit a required input field
    or name an undeclared one.
    """
    declared = {p.name: p for p in manifest.params}
    unknown = sorted(set(config.params) - set(declared))
    if unknown:
        raise ValidationError(
            f"unknown params: {', '.join(unknown)}",
            detail=[{"param": u, "error": "unknown"} for u in unknown],
        )

    values: dict[str, object] = {}
    for spec in manifest.params:
        if spec.name in config.params:
            values[spec.name] = _typed_value(
                config.params[spec.name], spec.type, spec.name, spec.enum_values
            )
        elif spec.default is not None:
            values[spec.name] = spec.default
        elif spec.required:
            raise ValidationError(
                f"missing required param {spec.name!r}",
                detail=[{"param": spec.name, "error": "missing-required"}],
            )

    declared_inputs = {i.name for i in manifest.inputs}
    bad = sorted(set(config.inputs) - declared_inputs)
    if bad:
        raise ValidationError(
            f"input mapping names undeclared fields: {', '.join(bad)}",
            detail=[{"input": b, "error": "undeclared"} for b in bad],
        )
    missing = sorted(i.name for i in manifest.inputs
                     if i.required and i.name not in config.inputs)
    if missing:
        raise ValidationError(
            f"input mapping omits required fields: {', '.join(missing)}",
            detail=[{"input": m, "error": "unmapped-required"} for m in missing],
        )

    return ResolvedConfig(values=values, inputs=dict(config.inputs), label=config.label)
