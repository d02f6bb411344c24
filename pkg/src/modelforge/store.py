"""Model store: template registry plus S3-style bucket/key artifact storage.

Backed by the local filesystem (``<root>/templates/...``, ``<root>/artifacts/
<bucket>/<key>``) with a sidecar digest index rewritten atomically via rename.
Every blob is content-verified on read; keys are write-once.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import ConflictError, IntegrityError, NotFoundError, ValidationError
from .template import TemplateArchive, archive_digest, read_archive, semver_key

logger = logging.getLogger(__name__)

_BUCKET_RE = re.compile(r"^[a-z][a-z0-9-]*$")
ARCHIVE_FILENAME = "archive.tmpl.tgz"


@dataclass(frozen=True)
class TemplateRef:
    name: str
    version: str
    digest: str

    @property
    def coordinate(self) -> str:
        return f"{self.name}@{self.version}"


@dataclass(frozen=True)
class ArtifactKey:
    bucket: str
    key: str
    digest: str


def _check_key(bucket: str, key: str) -> None:
    if not _BUCKET_RE.match(bucket):
        raise ValidationError(f"invalid bucket name {bucket!r}")
    if not key or key.startswith("/") or ".." in key.split("/"):
        raise ValidationError(f"invalid artifact key {key!r}")


class Store:
    """Filesystem-backed registry and artifact store.

    Writes to a given (bucket, key) or (name, version) are serialized by one
    lock; readers never see a partially committed blob because bytes land via
    temp-file + rename and the index entry is written after the blob.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "templates").mkdir(parents=True, exist_ok=True)
        (self.root / "artifacts").mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._index = self._load_index()

    # -- index ------------------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> dict:
        path = self._index_path()
        if path.exists():
            return json.loads(path.read_text("utf-8"))
        return {"templates": {}, "artifacts": {}}

    def _save_index(self) -> None:
        tmp = self._index_path().with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._index, sort_keys=True, indent=1), "utf-8")
        os.replace(tmp, self._index_path())

    @staticmethod
    def _write_blob(path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    # -- template registry -------------------------------------------------

    def publish(self, archive: TemplateArchive) -> TemplateRef:
        """Publish an archive; (name, version) pairs are immutable."""
        manifest = archive.manifest
        coord = f"{manifest.name}@{manifest.version}"
        actual = archive_digest(archive.data)
        if actual != archive.digest:
            raise IntegrityError(f"archive digest mismatch for {coord}")
        with self._lock:
            if coord in self._index["templates"]:
                raise ConflictError(f"template {coord} is already published")
            tdir = self.root / "templates" / manifest.name / manifest.version
            self._write_blob(tdir / ARCHIVE_FILENAME, archive.data)
            meta = {
                "name": manifest.name,
                "version": manifest.version,
                "digest": archive.digest,
                "description": manifest.description,
                "output_kind": manifest.output.kind,
                "approval_required": manifest.approval_required,
                "inputs": [
                    {"name": i.name, "kind": i.kind, "required": i.required}
                    for i in manifest.inputs
                ],
                "params": [
                    {
                        "name": p.name, "type": p.type, "default": p.default,
                        "enum_values": list(p.enum_values) if p.enum_values else None,
                        "description": p.description, "required": p.required,
                    }
                    for p in manifest.params
                ],
                "resources": {
                    "cpu_millis": manifest.resources.cpu_millis,
                    "memory_mb": manifest.resources.memory_mb,
                },
            }
            self._write_blob(tdir / "meta.json",
                             json.dumps(meta, sort_keys=True, indent=1).encode())
            self._index["templates"][coord] = archive.digest
            self._save_index()
        logger.info("published template %s (%s)", coord, archive.digest[:12])
        return TemplateRef(manifest.name, manifest.version, archive.digest)

    def list_templates(self, prefix: str | None = None) -> list[tuple[TemplateRef, dict]]:
        """All published templates: name ascending, version descending."""
        with self._lock:
            coords = list(self._index["templates"].items())
        entries = []
        for coord, digest in coords:
            name, version = coord.split("@", 1)
            if prefix and not name.startswith(prefix):
                continue
            meta_path = self.root / "templates" / name / version / "meta.json"
            meta = json.loads(meta_path.read_text("utf-8")) if meta_path.exists() else {}
            entries.append((TemplateRef(name, version, digest), meta))
        # stable two-pass sort: version descending within name ascending
        entries.sort(key=lambda e: semver_key(e[0].version), reverse=True)
        entries.sort(key=lambda e: e[0].name)
        return entries

    def resolve(self, name: str, version: str | None = None) -> TemplateRef:
        """Find a template by name and version; ``None`` or 'latest' picks the
        highest semver."""
        with self._lock:
            matching = [
                (coord.split("@", 1)[1], digest)
                for coord, digest in self._index["templates"].items()
                if coord.split("@", 1)[0] == name
            ]
        if not matching:
            raise NotFoundError(f"no template named {name!r}")
        if version and version != "latest":
            for v, digest in matching:
                if v == version:
                    return TemplateRef(name, v, digest)
            raise NotFoundError(f"template {name}@{version} not found")
        v, digest = max(matching, key=lambda pair: semver_key(pair[0]))
        return TemplateRef(name, v, digest)

    def pull(self, ref: TemplateRef) -> TemplateArchive:
        """Fetch an archive; bytes are re-hashed against the ref digest."""
        coord = ref.coordinate
        with self._lock:
            known = self._index["templates"].get(coord)
        if known is None:
            raise NotFoundError(f"template {coord} not found")
        path = self.root / "templates" / ref.name / ref.version / ARCHIVE_FILENAME
        if not path.exists():
            raise NotFoundError(f"template blob for {coord} is missing")
        data = path.read_bytes()
        try:
            actual = archive_digest(data)
        except (OSError, gzip.BadGzipFile, EOFError) as exc:
            raise IntegrityError(f"stored archive for {coord} is corrupt: {exc}") from exc
        if actual != known or (ref.digest and actual != ref.digest):
            raise IntegrityError(
                f"stored archive for {coord} fails digest verification"
            )
        return read_archive(data)

    def delete_template(self, name: str, version: str) -> None:
        coord = f"{name}@{version}"
        with self._lock:
            if coord not in self._index["templates"]:
                raise NotFoundError(f"template {coord} not found")
            del self._index["templates"][coord]
            self._save_index()
        path = self.root / "templates" / name / version / ARCHIVE_FILENAME
        if path.exists():
            path.unlink()

    # -- artifacts ----------------------------------------------------------

    def _artifact_path(self, bucket: str, key: str) -> Path:
        return self.root / "artifacts" / bucket / key

    def put_artifact(self, bucket: str, key: str, data: bytes) -> ArtifactKey:
        """Write-once put; the digest index entry commits after the bytes."""
        _check_key(bucket, key)
        digest = hashlib.sha256(data).hexdigest()
        flat = f"{bucket}/{key}"
        with self._lock:
            if flat in self._index["artifacts"]:
                raise ConflictError(f"artifact {flat} already written (write-once)")
            self._write_blob(self._artifact_path(bucket, key), data)
            self._index["artifacts"][flat] = digest
            self._save_index()
        return ArtifactKey(bucket, key, digest)

    def get_artifact(self, key: ArtifactKey) -> bytes:
        data = self.get_bytes(key.bucket, key.key)
        if hashlib.sha256(data).hexdigest() != key.digest:
            raise IntegrityError(f"artifact {key.bucket}/{key.key} digest mismatch")
        return data

    def get_bytes(self, bucket: str, key: str) -> bytes:
        """Fetch by coordinate, verified against the index digest."""
        flat = f"{bucket}/{key}"
        with self._lock:
            digest = self._index["artifacts"].get(flat)
        if digest is None:
            raise NotFoundError(f"artifact {flat} not found")
        path = self._artifact_path(bucket, key)
        if not path.exists():
            raise NotFoundError(f"artifact blob {flat} is missing")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != digest:
            raise IntegrityError(f"artifact {flat} fails digest verification")
        return data

    def has_artifact(self, bucket: str, key: str) -> bool:
        with self._lock:
            return f"{bucket}/{key}" in self._index["artifacts"]

    def artifact_ref(self, bucket: str, key: str) -> ArtifactKey:
        flat = f"{bucket}/{key}"
        with self._lock:
            digest = self._index["artifacts"].get(flat)
        if digest is None:
            raise NotFoundError(f"artifact {flat} not found")
        return ArtifactKey(bucket, key, digest)

    def list_artifacts(self, bucket: str, prefix: str = "") -> list[ArtifactKey]:
        with self._lock:
            items = sorted(self._index["artifacts"].items())
        out = []
        for flat, digest in items:
            b, k = flat.split("/", 1)
            if b == bucket and k.startswith(prefix):
                out.append(ArtifactKey(b, k, digest))
        return out

    def move_artifact(self, src: ArtifactKey, dest_key: str) -> ArtifactKey:
        """Relocate a blob within its bucket (archival); the new key must be free."""
        _check_key(src.bucket, dest_key)
        src_flat = f"{src.bucket}/{src.key}"
        dest_flat = f"{src.bucket}/{dest_key}"
        with self._lock:
            digest = self._index["artifacts"].get(src_flat)
            if digest is None:
                raise NotFoundError(f"artifact {src_flat} not found")
            if dest_flat in self._index["artifacts"]:
                raise ConflictError(f"artifact {dest_flat} already exists")
            src_path = self._artifact_path(src.bucket, src.key)
            dest_path = self._artifact_path(src.bucket, dest_key)
            dest_path.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src_path, dest_path)
            del self._index["artifacts"][src_flat]
            self._index["artifacts"][dest_flat] = digest
            self._save_index()
        return ArtifactKey(src.bucket, dest_key, digest)

    def archive_model_version(self, model_id: str, version: int,
                              keys: list[ArtifactKey]) -> list[ArtifactKey]:
        """Move a model version's artifacts under the ``archive/`` prefix.

        Callers enforce the lifecycle precondition (never the serving
        version); this only relocates bytes, preserving digests.
        """
        moved = []
        for key in keys:
            basename = key.key.rsplit("/", 1)[-1]
            dest = f"archive/{model_id}/v{version}/{basename}"
            moved.append(self.move_artifact(key, dest))
        logger.info("archived %d artifact(s) for %s v%d", len(moved), model_id, version)
        return moved
