"""Data monitors: distribution drift via the population stability index,
feedback ingestion, and feedback-derived rolling accuracy.

PSI = sum_b (p_b - q_b) * ln(p_b / q_b) over aligned bins, with empty-bin
proportions smoothed by epsilon = 1e-4 and renormalized.  Identical
histograms give exactly 0.0 and the smoothed formula is symmetric in its
arguments.  Drift and degradation events are edge-triggered: once raised,
they re-arm only after the condition clears.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .connectors import DatasetSnapshot
from .errors import NotFoundError, ValidationError
from .gateway import Gateway, InferenceRecord

logger = logging.getLogger(__name__)

PSI_EPSILON = 1e-4
PSI_BINS = 10
DEFAULT_DRIFT_THRESHOLD = 0.2
DEFAULT_MIN_WINDOW = 50
DEFAULT_DEGRADE_THRESHOLD = 0.6
DEFAULT_MIN_LABELED = 20


def compute_psi(reference: list[float], current: list[float]) -> float:
    """PSI between two aligned histograms of bin counts."""
    if len(reference) != len(current):
        raise ValidationError(
            f"histogram bin counts differ: {len(reference)} vs {len(current)}"
        )
    total_ref = float(sum(reference))
    total_cur = float(sum(current))
    if total_ref <= 0 or total_cur <= 0:
        raise ValidationError("histograms must have positive totals")

    p = [c / total_ref for c in reference]
    q = [c / total_cur for c in current]
    p = _smooth(p)
    q = _smooth(q)
    return sum((pb - qb) * math.log(pb / qb) for pb, qb in zip(p, q))


def _smooth(props: list[float]) -> list[float]:
    smoothed = [x if x > 0.0 else PSI_EPSILON for x in props]
    total = sum(smoothed)
    if total != 1.0:
        smoothed = [x / total for x in smoothed]
    return smoothed


def numeric_histogram(values: list[float], lo: float, hi: float,
                      bins: int = PSI_BINS) -> list[float]:
    """Equal-width bins over [lo, hi]; out-of-range values land in edge bins."""
    counts = [0.0] * bins
    width = (hi - lo) / bins
    for v in values:
        if width <= 0:
            idx = 0
        else:
            idx = int((v - lo) / width)
            idx = min(max(idx, 0), bins - 1)
        counts[idx] += 1.0
    return counts


def categorical_histogram(values: list[str], categories: list[str]) -> list[float]:
    index = {c: i for i, c in enumerate(categories)}
    counts = [0.0] * len(categories)
    for v in values:
        counts[index[v]] += 1.0
    return counts


@dataclass
class DriftReport:
    model_id: str
    computed_at: float
    per_feature: dict[str, float]
    prediction_psi: float | None
    threshold: float
    drifted: bool
    status: str = "ok"  # ok | insufficient_data
    window_size: int = 0

    @property
    def max_psi(self) -> float:
        values = list(self.per_feature.values())
        if self.prediction_psi is not None:
            values.append(self.prediction_psi)
        return max(values, default=0.0)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id, "computed_at": self.computed_at,
            "per_feature": dict(self.per_feature),
            "prediction_psi": self.prediction_psi,
            "threshold": self.threshold, "drifted": self.drifted,
            "status": self.status, "window_size": self.window_size,
            "max_psi": self.max_psi,
        }


@dataclass
class FeedbackRecord:
    model_id: str
    inference_id: str
    ground_truth: str
    submitted_at: float


def drift_report(model_id: str, reference: DatasetSnapshot,
                 window: list[InferenceRecord], *,
                 threshold: float = DEFAULT_DRIFT_THRESHOLD,
                 min_window: int = DEFAULT_MIN_WINDOW,
                 computed_at: float = 0.0,
                 label_field: str = "label") -> DriftReport:
    """Compare the recent inference window against the training snapshot.

    Numeric features use 10 equal-width bins from the reference min/max;
    categoricals and the predicted class bin by category.  Reports are
    withheld (status insufficient_data) below ``min_window`` inferences.
    """
    if len(window) < min_window:
        return DriftReport(model_id=model_id, computed_at=computed_at,
                           per_feature={}, prediction_psi=None,
                           threshold=threshold, drifted=False,
                           status="insufficient_data", window_size=len(window))

    per_feature: dict[str, float] = {}
    for name, kind in reference.schema:
        if name == label_field or kind not in ("numeric", "categorical"):
            continue
        current_raw = [rec.request.get(name) for rec in window]
        current_raw = [v for v in current_raw if v is not None]
        if not current_raw:
            continue
        ref_col = reference.column(name)
        if kind == "numeric":
            ref_vals = [float(v) for v in ref_col]
            cur_vals = [float(v) for v in current_raw]
            if not ref_vals:
                continue
            lo, hi = min(ref_vals), max(ref_vals)
            per_feature[name] = compute_psi(
                numeric_histogram(ref_vals, lo, hi),
                numeric_histogram(cur_vals, lo, hi),
            )
        else:
            cur_vals = [str(v) for v in current_raw]
            categories = sorted(set(ref_col) | set(cur_vals))
            per_feature[name] = compute_psi(
                categorical_histogram(ref_col, categories),
                categorical_histogram(cur_vals, categories),
            )

    prediction_psi = None
    predictions = [rec.predicted_label for rec in window
                   if rec.predicted_label is not None]
    if predictions and label_field in reference.field_names():
        ref_labels = reference.column(label_field)
        if ref_labels:
            categories = sorted(set(ref_labels) | set(predictions))
            prediction_psi = compute_psi(
                categorical_histogram(ref_labels, categories),
                categorical_histogram(predictions, categories),
            )

    report = DriftReport(model_id=model_id, computed_at=computed_at,
                         per_feature=per_feature, prediction_psi=prediction_psi,
                         threshold=threshold, drifted=False,
                         window_size=len(window))
    report.drifted = report.max_psi >= threshold
    return report


class MonitorService:
    """Feedback store plus edge-triggered drift/degradation detection.

    ``emit`` posts (kind, model_id, payload) into the controller's queue;
    ``is_serving`` gates event emission so monitors never fire for models
    outside the Serving state.
    """

    def __init__(self, gateway: Gateway, clock, reports_dir: str | Path, *,
                 emit: Callable[[str, str, dict], None],
                 is_serving: Callable[[str], bool],
                 drift_threshold: float = DEFAULT_DRIFT_THRESHOLD,
                 min_window: int = DEFAULT_MIN_WINDOW,
                 degrade_threshold: float = DEFAULT_DEGRADE_THRESHOLD,
                 min_labeled: int = DEFAULT_MIN_LABELED):
        self.gateway = gateway
        self.clock = clock
        self.reports_dir = Path(reports_dir)
        self.emit = emit
        self.is_serving = is_serving
        self.drift_threshold = drift_threshold
        self.min_window = min_window
        self.degrade_threshold = degrade_threshold
        self.min_labeled = min_labeled
        self._lock = threading.Lock()
        self._feedback: dict[str, dict[str, FeedbackRecord]] = {}
        self._drift_active: dict[str, bool] = {}
        self._degrade_active: dict[str, bool] = {}
        self._last_report: dict[str, DriftReport] = {}

    # -- feedback --------------------------------------------------------------

    def record_feedback(self, model_id: str, inference_id: str,
                        ground_truth: str) -> dict:
        """Store feedback for a logged inference; duplicates last-write-win."""
        record = self.gateway.find_inference(model_id, inference_id)
        if record is None:
            raise NotFoundError(
                f"inference {inference_id} is not in the log for model {model_id}"
            )
        overwrote = False
        with self._lock:
            per_model = self._feedback.setdefault(model_id, {})
            overwrote = inference_id in per_model
            per_model[inference_id] = FeedbackRecord(
                model_id=model_id, inference_id=inference_id,
                ground_truth=str(ground_truth), submitted_at=self.clock.now(),
            )
        if overwrote:
            self.emit("FeedbackOverwritten", model_id, {"inference_id": inference_id})
        self._check_accuracy(model_id)
        return {"inference_id": inference_id, "overwrote": overwrote}

    @staticmethod
    def _matches(record: InferenceRecord, truth: str) -> bool:
        if record.predicted_label is not None:
            return str(record.predicted_label) == truth
        results = record.output.get("results")
        if isinstance(results, list):  # ranked list: hit when truth is retrieved
            return any(str(item.get("id")) == truth for item in results)
        return False

    def performance_metrics(self, model_id: str,
                            window_size: int = DEFAULT_MIN_WINDOW) -> dict:
        """Rolling accuracy over the last ``window_size`` labeled inferences."""
        with self._lock:
            feedback = dict(self._feedback.get(model_id, {}))
        if not feedback:
            return {"model_id": model_id, "labeled": 0, "accuracy": None,
                    "window_size": window_size}
        try:
            records = self.gateway.inference_window(model_id)
        except NotFoundError:
            records = []
        labeled = [(rec, feedback[rec.inference_id].ground_truth)
                   for rec in records if rec.inference_id in feedback]
        labeled = labeled[-window_size:]
        if not labeled:
            return {"model_id": model_id, "labeled": 0, "accuracy": None,
                    "window_size": window_size}
        matches = sum(1 for rec, truth in labeled if self._matches(rec, truth))
        return {"model_id": model_id, "labeled": len(labeled),
                "matches": matches, "accuracy": matches / len(labeled),
                "window_size": window_size}

    def _check_accuracy(self, model_id: str) -> None:
        metrics = self.performance_metrics(model_id, window_size=self.min_window)
        accuracy = metrics.get("accuracy")
        if accuracy is None or metrics["labeled"] < self.min_labeled:
            return
        with self._lock:
            active = self._degrade_active.get(model_id, False)
            degraded = accuracy < self.degrade_threshold
            self._degrade_active[model_id] = degraded
        if degraded and not active and self.is_serving(model_id):
            self.emit("AccuracyDegraded", model_id,
                      {"accuracy": accuracy, "labeled": metrics["labeled"],
                       "threshold": self.degrade_threshold})

    # -- drift -------------------------------------------------------------------

    def check_drift(self, model_id: str, reference: DatasetSnapshot, *,
                    threshold: float | None = None,
                    min_window: int | None = None) -> DriftReport:
        """Run one drift check; emits DriftDetected on a rising edge."""
        try:
            window = self.gateway.inference_window(model_id)
        except NotFoundError:
            window = []
        report = drift_report(
            model_id, reference, window,
            threshold=self.drift_threshold if threshold is None else threshold,
            min_window=self.min_window if min_window is None else min_window,
            computed_at=self.clock.now(),
        )
        if report.status == "ok":
            self._persist_report(report)
            with self._lock:
                active = self._drift_active.get(model_id, False)
                self._drift_active[model_id] = report.drifted
            if report.drifted and not active and self.is_serving(model_id):
                self.emit("DriftDetected", model_id,
                          {"max_psi": report.max_psi, "threshold": report.threshold,
                           "per_feature": report.per_feature})
        with self._lock:
            self._last_report[model_id] = report
        return report

    def last_report(self, model_id: str) -> DriftReport | None:
        with self._lock:
            return self._last_report.get(model_id)

    def _persist_report(self, report: DriftReport) -> None:
        path = (self.reports_dir / report.model_id / "drift"
                / f"{int(report.computed_at)}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=1),
                        "utf-8")

    def forget_model(self, model_id: str) -> None:
        with self._lock:
            self._feedback.pop(model_id, None)
            self._drift_active.pop(model_id, None)
            self._degrade_active.pop(model_id, None)
            self._last_report.pop(model_id, None)
