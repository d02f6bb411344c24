"""The dashboard's state->actions fixture must mirror the controller's
command gating; this is the backend half of the shared-fixture contract."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from modelforge import controller as ctl

FIXTURE = Path(__file__).resolve().parents[1] / "frontend" / "shared" / "state-actions.json"


@pytest.fixture(scope="module")
def gating() -> dict[str, list[str]]:
    return json.loads(FIXTURE.read_text("utf-8"))


def test_fixture_covers_every_lifecycle_state(gating):
    assert sorted(gating) == sorted(ctl.LIFECYCLE_STATES)


def test_approve_reject_iff_pending_approval(gating):
    for state, actions in gating.items():
        expected = state == ctl.PENDING_APPROVAL
        assert ("approve" in actions) == expected, state
        assert ("reject" in actions) == expected, state


def test_train_matches_command_guards(gating):
    # platform.train_model: fresh starts from Created/TrainingFailed/Rejected,
    # manual retrain from Serving; everything else coalesces or conflicts
    for state, actions in gating.items():
        assert ("train" in actions) == (
            state in (ctl.CREATED, ctl.TRAINING_FAILED, ctl.REJECTED)), state
        assert ("retrain" in actions) == (state == ctl.SERVING), state


def test_rollback_archive_delete_infer_guards(gating):
    for state, actions in gating.items():
        assert ("rollback" in actions) == (state in (ctl.SERVING, ctl.ARCHIVED)), state
        assert ("archive" in actions) == (state == ctl.SERVING), state
        assert ("delete" in actions) == (state != ctl.DELETED), state
        assert ("infer" in actions) == (state == ctl.SERVING), state
