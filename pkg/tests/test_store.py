"""Registry and artifact store tests, including fault injection."""

from __future__ import annotations

import pytest

from modelforge import demo
from modelforge.errors import ConflictError, IntegrityError, NotFoundError
from modelforge.store import Store
from modelforge.template import package


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "store")


@pytest.fixture
def fcr_archive(fcr_project):
    return package(fcr_project)


class TestRegistry:
    def test_publish_then_list(self, store, fcr_archive):
        ref = store.publish(fcr_archive)
        entries = store.list_templates()
        assert [(r.name, r.version) for r, _ in entries] == [("fcr", "1.0.0")]
        assert entries[0][1]["description"].startswith("Recommends")
        assert ref.digest == fcr_archive.digest

    def test_duplicate_publish_conflicts(self, store, fcr_archive):
        store.publish(fcr_archive)
        with pytest.raises(ConflictError):
            store.publish(fcr_archive)

    def test_latest_resolves_by_semver(self, store, tmp_path):
        p = demo.write_fcr_template(tmp_path / "p")
        store.publish(package(p))
        manifest = p / "template" / "manifest.yaml"
        manifest.write_text(manifest.read_text().replace("version: 1.0.0",
                                                         "version: 1.1.0"))
        store.publish(package(p))
        manifest.write_text(manifest.read_text().replace("version: 1.1.0",
                                                         "version: 1.2.0-rc.1"))
        store.publish(package(p))

        # semver precedence: 1.2.0-rc.1 > 1.1.0, but below its own release
        assert store.resolve("fcr").version == "1.2.0-rc.1"
        assert store.resolve("fcr", "latest").version == "1.2.0-rc.1"
        assert store.resolve("fcr", "1.0.0").version == "1.0.0"
        versions = [r.version for r, _ in store.list_templates()]
        assert versions == ["1.2.0-rc.1", "1.1.0", "1.0.0"]

        manifest.write_text(manifest.read_text().replace("version: 1.2.0-rc.1",
                                                         "version: 1.2.0"))
        store.publish(package(p))
        assert store.resolve("fcr").version == "1.2.0"

    def test_listing_sorted_name_asc_version_desc(self, store, tmp_path,
                                                  fcr_archive, approval_project):
        store.publish(fcr_archive)
        store.publish(package(approval_project))
        names = [r.name for r, _ in store.list_templates()]
        assert names == sorted(names)

    def test_prefix_filter(self, store, fcr_archive, approval_project):
        store.publish(fcr_archive)
        store.publish(package(approval_project))
        assert [r.name for r, _ in store.list_templates("fcr")] == ["fcr"]

    def test_empty_store_lists_empty(self, store):
        assert store.list_templates() == []

    def test_pull_roundtrip(self, store, fcr_archive):
        ref = store.publish(fcr_archive)
        pulled = store.pull(ref)
        assert pulled.digest == fcr_archive.digest
        assert pulled.data == fcr_archive.data

    def test_pull_unknown_not_found(self, store):
        from modelforge.store import TemplateRef
        with pytest.raises(NotFoundError):
            store.pull(TemplateRef("ghost", "1.0.0", "0" * 64))

    def test_pull_corrupted_blob_integrity_error(self, store, fcr_archive, tmp_path):
        ref = store.publish(fcr_archive)
        blob = (tmp_path / "store" / "templates" / "fcr" / "1.0.0"
                / "archive.tmpl.tgz")
        data = bytearray(blob.read_bytes())
        data[len(data) // 2] ^= 0xFF
        blob.write_bytes(bytes(data))
        with pytest.raises(IntegrityError):
            store.pull(ref)

    def test_delete_template(self, store, fcr_archive):
        ref = store.publish(fcr_archive)
        store.delete_template(ref.name, ref.version)
        assert store.list_templates() == []
        with pytest.raises(NotFoundError):
            store.resolve("fcr")


class TestArtifacts:
    def test_put_get_roundtrip(self, store):
        key = store.put_artifact("models", "m1/v1/model.bin", b"\x01\x02\x03")
        assert store.get_artifact(key) == b"\x01\x02\x03"

    def test_write_once(self, store):
        store.put_artifact("models", "m1/v1/model.bin", b"a")
        with pytest.raises(ConflictError):
            store.put_artifact("models", "m1/v1/model.bin", b"b")

    def test_missing_not_found(self, store):
        with pytest.raises(NotFoundError):
            store.get_bytes("models", "nope")

    def test_digest_fault_injection(self, store, tmp_path):
        key = store.put_artifact("models", "m1/model.bin", b"payload-bytes")
        blob = tmp_path / "store" / "artifacts" / "models" / "m1" / "model.bin"
        data = bytearray(blob.read_bytes())
        data[0] ^= 0xFF
        blob.write_bytes(bytes(data))
        with pytest.raises(IntegrityError):
            store.get_artifact(key)

    def test_bad_keys_rejected(self, store):
        from modelforge.errors import ValidationError
        with pytest.raises(ValidationError):
            store.put_artifact("models", "../escape", b"x")
        with pytest.raises(ValidationError):
            store.put_artifact("Bad Bucket", "k", b"x")

    def test_survives_restart(self, tmp_path, fcr_project):
        archive = package(fcr_project)
        store = Store(tmp_path / "s")
        ref = store.publish(archive)
        key = store.put_artifact("models", "m/model.bin", b"persist-me")

        reopened = Store(tmp_path / "s")
        assert reopened.pull(ref).digest == archive.digest
        assert reopened.get_artifact(key) == b"persist-me"

    def test_archive_model_version_moves_under_archive_prefix(self, store):
        key = store.put_artifact("models", "m1/runs/run-000001/model.bin", b"v1")
        metrics = store.put_artifact("models", "m1/runs/run-000001/metrics.json", b"{}")
        moved = store.archive_model_version("m1", 1, [key, metrics])
        assert [m.key for m in moved] == [
            "archive/m1/v1/model.bin", "archive/m1/v1/metrics.json"]
        assert store.get_artifact(moved[0]) == b"v1"
        with pytest.raises(NotFoundError):
            store.get_bytes("models", "m1/runs/run-000001/model.bin")

    def test_list_artifacts_prefix(self, store):
        store.put_artifact("models", "a/1", b"x")
        store.put_artifact("models", "a/2", b"y")
        store.put_artifact("models", "b/1", b"z")
        keys = [k.key for k in store.list_artifacts("models", prefix="a/")]
        assert keys == ["a/1", "a/2"]
