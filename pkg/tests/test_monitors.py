"""Drift detection and feedback accuracy tests with arithmetic oracles."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelforge.connectors import make_snapshot
from modelforge.errors import ValidationError
from modelforge.gateway import InferenceRecord
from modelforge.monitors import (
    PSI_EPSILON,
    DriftReport,
    categorical_histogram,
    compute_psi,
    drift_report,
    numeric_histogram,
)


def oracle_psi(ref_counts, cur_counts):
    """Independent PSI arithmetic: fractions, explicit smoothing."""
    def props(counts):
        total = sum(counts)
        p = [c / total for c in counts]
        p = [x if x > 0 else PSI_EPSILON for x in p]
        s = sum(p)
        return [x / s for x in p]

    p, q = props(ref_counts), props(cur_counts)
    return sum((pb - qb) * math.log(pb / qb) for pb, qb in zip(p, q))


class TestPsi:
    def test_identical_histograms_exactly_zero(self):
        for h in ([1, 2, 3], [10] * 10, [0, 5, 0, 5]):
            assert compute_psi(h, h) == 0.0

    @given(st.lists(st.integers(0, 1000), min_size=2, max_size=12)
           .filter(lambda h: sum(h) > 0))
    @settings(max_examples=200)
    def test_self_psi_zero_and_nonnegative_random(self, h):
        assert compute_psi(h, h) == 0.0
        shuffled = list(h)
        random.Random(0).shuffle(shuffled)
        if sum(shuffled) > 0:
            assert compute_psi(h, shuffled) >= 0.0

    def test_concentration_shift_exceeds_threshold(self):
        # reference uniform over 2 bins; current all in bin 1
        value = compute_psi([5, 5], [10, 0])
        assert value == pytest.approx(oracle_psi([5, 5], [10, 0]), rel=1e-12)
        assert value > 0.2

    def test_matches_oracle_on_fixtures(self):
        cases = [
            ([10, 20, 30], [30, 20, 10]),
            ([1, 0, 0, 9], [0, 5, 5, 0]),
            ([100, 1], [1, 100]),
        ]
        for ref, cur in cases:
            assert compute_psi(ref, cur) == pytest.approx(oracle_psi(ref, cur),
                                                          rel=1e-12)

    def test_symmetric(self):
        for ref, cur in [([5, 5], [10, 0]), ([1, 2, 3], [3, 2, 1])]:
            assert compute_psi(ref, cur) == pytest.approx(compute_psi(cur, ref),
                                                          rel=1e-12)

    def test_bin_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            compute_psi([1, 2], [1, 2, 3])

    def test_zero_total_rejected(self):
        with pytest.raises(ValidationError):
            compute_psi([0, 0], [1, 2])


class TestHistograms:
    def test_numeric_bins_equal_width(self):
        counts = numeric_histogram([0.0, 0.999, 5.0, 9.99, 10.0], 0.0, 10.0)
        assert len(counts) == 10
        assert counts[0] == 2.0  # 0.0 and 0.999
        assert counts[5] == 1.0
        assert counts[9] == 2.0  # 9.99 and the upper edge

    def test_out_of_range_lands_in_edge_bins(self):
        counts = numeric_histogram([-100.0, 200.0], 0.0, 10.0)
        assert counts[0] == 1.0
        assert counts[9] == 1.0

    def test_degenerate_range_single_bin(self):
        counts = numeric_histogram([5.0, 5.0], 5.0, 5.0)
        assert counts[0] == 2.0

    def test_categorical(self):
        counts = categorical_histogram(["a", "b", "a"], ["a", "b", "c"])
        assert counts == [2.0, 1.0, 0.0]


def record(i, request, label=None, output=None):
    return InferenceRecord(
        inference_id=f"inf-{i:08d}", serve_seq=i, at=float(i),
        request=request, output=output or {}, model_version=1,
        predicted_label=label,
    )


def reference_snapshot(values, labels=None):
    rows = []
    for i, v in enumerate(values):
        row = [str(v)]
        if labels is not None:
            row.append(labels[i % len(labels)])
        rows.append(row)
    schema = [("cost", "numeric")] + ([("label", "categorical")] if labels else [])
    return make_snapshot(schema, rows, fetched_at=0.0)


class TestDriftReport:
    def test_in_distribution_not_drifted(self):
        rng = random.Random(5)
        ref_vals = [rng.gauss(100, 10) for _ in range(500)]
        reference = reference_snapshot(ref_vals)
        window = [record(i, {"cost": rng.gauss(100, 10)}) for i in range(100)]
        report = drift_report("m1", reference, window, computed_at=1.0)
        assert report.status == "ok"
        assert not report.drifted
        assert report.per_feature["cost"] < 0.2

    def test_shifted_distribution_drifted(self):
        rng = random.Random(5)
        ref_vals = [rng.gauss(100, 10) for _ in range(500)]
        reference = reference_snapshot(ref_vals)
        window = [record(i, {"cost": rng.gauss(150, 10)}) for i in range(100)]
        report = drift_report("m1", reference, window, computed_at=1.0)
        assert report.drifted
        assert report.per_feature["cost"] >= 0.2

    def test_insufficient_window_withheld(self):
        reference = reference_snapshot([1.0, 2.0, 3.0])
        window = [record(i, {"cost": 1.0}) for i in range(10)]
        report = drift_report("m1", reference, window, computed_at=1.0)
        assert report.status == "insufficient_data"
        assert not report.drifted

    def test_prediction_psi_over_classes(self):
        reference = reference_snapshot([1.0] * 60, labels=["A", "B"])
        window = [record(i, {"cost": 1.0}, label="A") for i in range(60)]
        report = drift_report("m1", reference, window, computed_at=1.0)
        # training labels are 50/50 A/B; predictions are all A
        assert report.prediction_psi is not None
        assert report.prediction_psi == pytest.approx(
            oracle_psi([30, 30], [60, 0]), rel=1e-12)

    def test_max_psi_drives_drifted_flag(self):
        report = DriftReport("m", 0.0, {"a": 0.05, "b": 0.25}, None,
                             threshold=0.2, drifted=False)
        assert report.max_psi == 0.25
        report.drifted = report.max_psi >= report.threshold
        assert report.drifted


class FakeServingGateway:
    """Minimal gateway stand-in: a fixed inference window."""

    def __init__(self, records):
        self.records = records

    def inference_window(self, model_id, limit=None):
        return self.records[-limit:] if limit else list(self.records)

    def find_inference(self, model_id, inference_id):
        for r in self.records:
            if r.inference_id == inference_id:
                return r
        return None


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def now(self):
        self.t += 1.0
        return self.t


def make_service(records, tmp_path, **kwargs):
    from modelforge.monitors import MonitorService
    events = []
    service = MonitorService(
        FakeServingGateway(records), FakeClock(), tmp_path / "monitoring",
        emit=lambda kind, mid, payload: events.append((kind, mid, payload)),
        is_serving=lambda mid: True, **kwargs)
    return service, events


class TestFeedback:
    def test_matching_feedback_raises_accuracy(self, tmp_path):
        records = [record(i, {"x": 1}, label="A") for i in range(10)]
        service, _ = make_service(records, tmp_path)
        for i in range(8):
            service.record_feedback("m1", f"inf-{i:08d}", "A")
        for i in range(8, 10):
            service.record_feedback("m1", f"inf-{i:08d}", "B")
        metrics = service.performance_metrics("m1", window_size=10)
        assert metrics["accuracy"] == 0.8
        assert metrics["labeled"] == 10

    def test_unknown_inference_not_found(self, tmp_path):
        from modelforge.errors import NotFoundError
        service, _ = make_service([], tmp_path)
        with pytest.raises(NotFoundError):
            service.record_feedback("m1", "inf-99999999", "A")

    def test_duplicate_feedback_overwrites_once(self, tmp_path):
        records = [record(0, {"x": 1}, label="A")]
        service, events = make_service(records, tmp_path)
        service.record_feedback("m1", "inf-00000000", "B")
        result = service.record_feedback("m1", "inf-00000000", "A")
        assert result["overwrote"]
        assert ("FeedbackOverwritten", "m1",
                {"inference_id": "inf-00000000"}) in events
        metrics = service.performance_metrics("m1", window_size=10)
        assert metrics["labeled"] == 1  # not double-counted
        assert metrics["accuracy"] == 1.0  # last write wins

    def test_no_feedback_gives_empty_metric(self, tmp_path):
        service, _ = make_service([record(0, {"x": 1}, label="A")], tmp_path)
        metrics = service.performance_metrics("m1")
        assert metrics["accuracy"] is None
        assert metrics["labeled"] == 0

    def test_order_invariance(self, tmp_path):
        records = [record(i, {"x": 1}, label="A") for i in range(6)]
        truths = {f"inf-{i:08d}": ("A" if i % 2 else "B") for i in range(6)}

        accuracies = []
        for seed in (1, 2):
            service, _ = make_service(records, tmp_path)
            order = list(truths)
            random.Random(seed).shuffle(order)
            for inf_id in order:
                service.record_feedback("m1", inf_id, truths[inf_id])
            accuracies.append(service.performance_metrics("m1", 10)["accuracy"])
        assert accuracies[0] == accuracies[1]

    def test_ranked_list_feedback_matches_on_retrieved_id(self, tmp_path):
        output = {"results": [{"id": "d7", "score": 0.9}]}
        records = [record(0, {"q": "x"}, label=None, output=output)]
        service, _ = make_service(records, tmp_path)
        service.record_feedback("m1", "inf-00000000", "d7")
        assert service.performance_metrics("m1", 10)["accuracy"] == 1.0

    def test_degradation_edge_triggered(self, tmp_path):
        records = [record(i, {"x": 1}, label="A") for i in range(30)]
        service, events = make_service(records, tmp_path, min_labeled=20)
        # 15 correct, 15 wrong -> accuracy 0.5 < 0.6 threshold
        for i in range(30):
            service.record_feedback("m1", f"inf-{i:08d}",
                                    "A" if i < 15 else "B")
        degraded = [e for e in events if e[0] == "AccuracyDegraded"]
        assert len(degraded) == 1  # deduplicated while the condition holds


class TestDriftService:
    def test_drift_event_edge_triggered(self, tmp_path):
        rng = random.Random(5)
        reference = reference_snapshot([rng.gauss(100, 10) for _ in range(300)])
        shifted = [record(i, {"cost": rng.gauss(200, 5)}) for i in range(60)]
        service, events = make_service(shifted, tmp_path)
        service.check_drift("m1", reference)
        service.check_drift("m1", reference)  # still drifted; no second event
        drift_events = [e for e in events if e[0] == "DriftDetected"]
        assert len(drift_events) == 1

    def test_no_event_below_min_window(self, tmp_path):
        reference = reference_snapshot([1.0] * 100)
        service, events = make_service([record(0, {"cost": 1.0})], tmp_path)
        report = service.check_drift("m1", reference)
        assert report.status == "insufficient_data"
        assert events == []

    def test_report_persisted(self, tmp_path):
        rng = random.Random(5)
        reference = reference_snapshot([rng.gauss(100, 10) for _ in range(300)])
        window = [record(i, {"cost": rng.gauss(100, 10)}) for i in range(60)]
        service, _ = make_service(window, tmp_path)
        service.check_drift("m1", reference)
        reports = list((tmp_path / "monitoring" / "m1" / "drift").glob("*.json"))
        assert len(reports) == 1
