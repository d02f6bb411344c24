"""Model family tests: every derived expectation is computed by an
independent oracle in this file, never copied from the implementation."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelforge import models
from modelforge.errors import ValidationError

# the 3-document fixture used across posterior checks
NB_DOCS = [
    ("leak in pipe", "PLUMB"),
    ("light broken", "ELEC"),
    ("pipe burst water", "PLUMB"),
]


def oracle_tokens(text: str) -> list[str]:
    """Independent tokenizer: manual character scan."""
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum() and not ch == "_":
            cur.append(ch)
        else:
            if cur:
                out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def oracle_nb_log_posteriors(docs, alpha, text):
    """Brute-force multinomial NB posteriors with a reserved unseen slot."""
    labels = sorted({lab for _, lab in docs})
    vocab = sorted({t for txt, _ in docs for t in oracle_tokens(txt)})
    by_class = {c: Counter() for c in labels}
    n_docs_per = Counter(lab for _, lab in docs)
    for txt, lab in docs:
        by_class[lab].update(oracle_tokens(txt))
    scores = {}
    for c in labels:
        total = sum(by_class[c].values())
        denom = total + alpha * (len(vocab) + 1)
        s = math.log(n_docs_per[c] / len(docs))
        for tok in oracle_tokens(text):
            if tok in vocab:
                s += math.log((by_class[c][tok] + alpha) / denom)
            else:
                s += math.log(alpha / denom)
        scores[c] = s
    return scores


class TestTokenize:
    def test_mixed_case_and_punctuation(self):
        assert models.tokenize("Pipe LEAK, 2nd floor") == ["pipe", "leak", "2nd", "floor"]

    def test_empty(self):
        assert models.tokenize("") == []

    def test_double_separator(self):
        assert models.tokenize("a--b") == ["a", "b"]

    @given(st.text(max_size=200))
    def test_tokens_are_lowercase_alnum(self, text):
        for tok in models.tokenize(text):
            assert tok == tok.lower()
            assert all(ch.isalnum() and ch != "_" for ch in tok)


class TestNaiveBayes:
    def test_fixture_prediction(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        label, _ = models.nb_predict(model, "water pipe")
        assert label == "PLUMB"

    def test_posteriors_match_bruteforce_oracle(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        for text in ["water pipe", "light", "leak pipe burst", "", "unseen words here"]:
            expected = oracle_nb_log_posteriors(NB_DOCS, 1.0, text)
            _, actual = models.nb_predict(model, text)
            for c in expected:
                assert actual[c] == pytest.approx(expected[c], abs=1e-9)

    def test_tie_breaks_to_lexicographically_smaller(self):
        model = models.nb_train([("a", "X"), ("a", "Y")], alpha=1.0)
        label, scores = models.nb_predict(model, "a")
        assert scores["X"] == pytest.approx(scores["Y"], abs=1e-12)
        assert label == "X"

    def test_normalization_identity(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        for c in model.classes:
            total = sum(math.exp(lp) for lp in model.token_log_likelihoods[c].values())
            total += math.exp(model.unseen_log_likelihood[c])
            assert total == pytest.approx(1.0, abs=1e-9)

    @given(st.lists(
        st.tuples(st.text(alphabet="abcdef ", min_size=1, max_size=12),
                  st.sampled_from(["A", "B", "C"])),
        min_size=2, max_size=20,
    ), st.floats(min_value=0.05, max_value=5.0, allow_nan=False))
    @settings(max_examples=50)
    def test_normalization_identity_random(self, docs, alpha):
        if len({lab for _, lab in docs}) < 2:
            return
        model = models.nb_train(docs, alpha=alpha)
        for c in model.classes:
            total = sum(math.exp(lp) for lp in model.token_log_likelihoods[c].values())
            total += math.exp(model.unseen_log_likelihood[c])
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_empty_text_predicts_prior_argmax(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        label, _ = models.nb_predict(model, "")
        assert label == "PLUMB"  # 2 of 3 training docs

    def test_argmax_invariant_under_additive_constant(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        _, scores = models.nb_predict(model, "water pipe")
        shifted = {c: s + 123.456 for c, s in scores.items()}
        assert max(scores, key=scores.get) == max(shifted, key=shifted.get)

    def test_training_docs_classified_correctly(self):
        model = models.nb_train(NB_DOCS, alpha=1.0)
        for text, lab in NB_DOCS:
            assert models.nb_predict(model, text)[0] == lab

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            models.nb_train([("a", "X"), ("b", "X")], alpha=1.0)

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(ValidationError):
            models.nb_train(NB_DOCS, alpha=0.0)


class TestLogisticRegression:
    def test_separable_1d(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([0.0, 1.0])
        model = models.logreg_train(X, y, lr=0.5, iters=2000)
        assert model.weights[0] > 0  # separator sign is determined analytically
        for x, target in [(-1.0, False), (1.0, True)]:
            _, decision = models.logreg_predict(model, [x])
            assert decision is target
        score_pos, _ = models.logreg_predict(model, [1.0])
        assert score_pos > 0.9

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            models.logreg_train(np.array([[1.0], [2.0]]), np.array([1.0, 1.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError):
            models.logreg_train(np.array([[np.inf], [1.0]]), np.array([0.0, 1.0]))

    def test_gradient_at_zero_closed_form(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 4))
        y = (rng.random(20) > 0.5).astype(float)
        grad_w, grad_b = models.logreg_gradient(X, y, np.zeros(4), 0.0)
        expected_w = X.T @ (0.5 - y) / len(y)
        assert np.allclose(grad_w, expected_w, atol=1e-12)
        assert grad_b == pytest.approx(float(np.mean(0.5 - y)), abs=1e-12)

    def test_gradient_matches_central_finite_differences(self):
        rng = np.random.default_rng(42)
        h = 1e-6
        for _ in range(100):
            X = rng.normal(size=(12, 5))
            y = (rng.random(12) > 0.5).astype(float)
            if y.min() == y.max():
                y[0] = 1.0 - y[0]
            w = rng.normal(scale=0.5, size=5)
            b = float(rng.normal(scale=0.5))
            grad_w, grad_b = models.logreg_gradient(X, y, w, b)
            for i in range(5):
                e = np.zeros(5)
                e[i] = h
                fd = (models.logreg_loss(X, y, w + e, b)
                      - models.logreg_loss(X, y, w - e, b)) / (2 * h)
                denom = max(abs(fd), abs(grad_w[i]), 1e-8)
                assert abs(grad_w[i] - fd) / denom < 1e-5
            fd_b = (models.logreg_loss(X, y, w, b + h)
                    - models.logreg_loss(X, y, w, b - h)) / (2 * h)
            assert abs(grad_b - fd_b) / max(abs(fd_b), abs(grad_b), 1e-8) < 1e-5

    def test_loss_non_increasing_small_lr(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(40, 3))
        y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0).astype(float)
        model = models.logreg_train(X, y, lr=0.01, iters=300, record_loss=True)
        losses = model.loss_curve
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_zero_model_scores_half_and_approves(self):
        model = models.LRModel(
            weights=np.zeros(2), bias=0.0, feature_names=["a", "b"],
            means=np.zeros(2), stds=np.ones(2), classes=["false", "true"],
        )
        score, decision = models.logreg_predict(model, [3.0, -1.0])
        assert score == 0.5
        assert decision is True  # >= rule at exactly 0.5

    def test_monotone_in_positive_weight_feature(self):
        model = models.LRModel(
            weights=np.array([2.0]), bias=0.1, feature_names=["x"],
            means=np.zeros(1), stds=np.ones(1), classes=["0", "1"],
        )
        scores = [models.logreg_predict(model, [v])[0] for v in (-2, -1, 0, 1, 2)]
        assert scores == sorted(scores)

    def test_zero_variance_features_dropped_and_recorded(self):
        X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = models.logreg_train(X, y, feature_names=["x", "const"])
        assert model.feature_names == ["x"]
        assert model.dropped_features == ["const"]

    def test_arity_mismatch_rejected(self):
        model = models.logreg_train(np.array([[-1.0], [1.0]]), np.array([0.0, 1.0]))
        with pytest.raises(ValidationError):
            models.logreg_predict(model, [1.0, 2.0])

    def test_record_training_roundtrip(self):
        rows = [{"cost": "100", "priority": "low"},
                {"cost": "9000", "priority": "high"},
                {"cost": "150", "priority": "low"},
                {"cost": "8000", "priority": "high"}]
        labels = ["true", "false", "true", "false"]
        model = models.logreg_train_records(
            rows, labels, lr=0.5, iters=500,
            numeric_fields=["cost"], categorical_fields=["priority"])
        assert model.classes == ["false", "true"]
        _, decided = models.logreg_predict_record(model, rows[0])
        assert decided == "true"


class TestTfidf:
    DOCS = [
        ("d1", "pump seal leak", 0.0, "closed"),
        ("d2", "fan belt noise", 100_000.0, "open"),
        ("d3", "pump motor hot", 250_000.0, "closed"),
    ]

    def oracle_cosine(self, docs, a_text, b_text):
        """Independent cosine via dense dicts and the same published idf."""
        n = len(docs)
        df = Counter()
        for _, text, _, _ in docs:
            df.update(set(oracle_tokens(text)))
        idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}

        def vec(text):
            tf = Counter(t for t in oracle_tokens(text) if t in idf)
            return {t: c * idf[t] for t, c in tf.items()}

        va, vb = vec(a_text), vec(b_text)
        dot = sum(va[t] * vb.get(t, 0.0) for t in va)
        na = math.sqrt(sum(v * v for v in va.values()))
        nb = math.sqrt(sum(v * v for v in vb.values()))
        return dot / (na * nb) if na and nb else 0.0

    def test_identical_query_scores_one(self):
        index = models.tfidf_index(self.DOCS)
        results = models.tfidf_query(index, "pump seal leak", k=3)
        assert results[0][0] == "d1"
        assert results[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_query_returns_nothing(self):
        index = models.tfidf_index(self.DOCS)
        assert models.tfidf_query(index, "zebra xylophone", k=3) == []

    def test_scores_match_dot_product_oracle(self):
        index = models.tfidf_index(self.DOCS)
        query = "pump leak"
        results = dict(models.tfidf_query(index, query, k=3))
        for doc_id, text, _, _ in self.DOCS:
            expected = self.oracle_cosine(self.DOCS, query, text)
            if expected > 0:
                assert results[doc_id] == pytest.approx(expected, abs=1e-9)

    def test_window_excludes_best_match(self):
        index = models.tfidf_index(self.DOCS)
        full = models.tfidf_query(index, "pump seal leak", k=3)
        assert full[0][0] == "d1"
        # 1-day window anchored at 260000 keeps only d3 (epoch 250000)
        windowed = models.tfidf_query(index, "pump seal leak", k=3,
                                      window=(260_000.0, 1))
        assert windowed[0][0] == "d3"
        assert all(doc_id != "d1" for doc_id, _ in windowed)

    def test_status_filter_soundness(self):
        index = models.tfidf_index(self.DOCS)
        for doc_id, _ in models.tfidf_query(index, "pump fan", k=3,
                                            status_filter="closed"):
            status = next(s for i, _, _, s in self.DOCS if i == doc_id)
            assert status == "closed"

    def test_symmetry(self):
        for a in self.DOCS:
            for b in self.DOCS:
                assert (self.oracle_cosine(self.DOCS, a[1], b[1])
                        == pytest.approx(self.oracle_cosine(self.DOCS, b[1], a[1]),
                                         abs=1e-12))

    def test_scores_in_unit_interval_and_sorted(self):
        index = models.tfidf_index(self.DOCS)
        results = models.tfidf_query(index, "pump fan belt", k=3)
        scores = [s for _, s in results]
        assert all(0.0 <= s <= 1.0 + 1e-12 for s in scores)
        assert scores == sorted(scores, reverse=True)

    def test_tie_breaks_by_ascending_id(self):
        docs = [("b", "same text", None, "open"), ("a", "same text", None, "open")]
        index = models.tfidf_index(docs)
        results = models.tfidf_query(index, "same text", k=2)
        assert [doc_id for doc_id, _ in results] == ["a", "b"]

    def test_k_must_be_positive(self):
        index = models.tfidf_index(self.DOCS)
        with pytest.raises(ValidationError):
            models.tfidf_query(index, "pump", k=0)

    def test_unit_norm_after_weighting(self):
        index = models.tfidf_index(self.DOCS)
        for doc, norm in zip(index.documents, index.norms):
            sq = sum((cnt * index.idf[t]) ** 2 for t, cnt in doc.counts.items())
            assert math.sqrt(sq) / norm == pytest.approx(1.0, abs=1e-12)

    def test_self_retrieval_score(self):
        index = models.tfidf_index(self.DOCS)
        expected = np.mean([
            max(self.oracle_cosine(self.DOCS, a[1], b[1])
                for b in self.DOCS if b[0] != a[0])
            for a in self.DOCS
        ])
        assert models.tfidf_self_retrieval(index) == pytest.approx(expected, abs=1e-9)


class TestMajority:
    def test_most_frequent(self):
        assert models.majority_train(["A", "A", "B"]).label == "A"

    def test_tie_lexicographic(self):
        assert models.majority_train(["B", "A"]).label == "A"

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            models.majority_train([])


class TestSerialization:
    def test_nb_roundtrip_bitwise(self):
        model = models.nb_train(NB_DOCS, alpha=0.7, text_fields=["description"])
        clone = models.deserialize_model(models.serialize_model(model))
        for text in ["water pipe", "light broken", "", "novel token"]:
            _, original = models.nb_predict(model, text)
            _, restored = models.nb_predict(clone, text)
            assert original == restored  # bitwise equal floats

    def test_logreg_roundtrip_bitwise(self):
        rows = [{"cost": str(c), "priority": p}
                for c, p in [(100, "low"), (9000, "high"), (200, "low"), (7000, "high")]]
        model = models.logreg_train_records(rows, ["true", "false", "true", "false"],
                                            numeric_fields=["cost"],
                                            categorical_fields=["priority"])
        clone = models.deserialize_model(models.serialize_model(model))
        for row in rows:
            assert models.logreg_predict_record(model, row) == \
                models.logreg_predict_record(clone, row)

    def test_tfidf_roundtrip_bitwise(self):
        index = models.tfidf_index(TestTfidf.DOCS, text_field="description",
                                   query_defaults={"top_k": 2})
        clone = models.deserialize_model(models.serialize_model(index))
        assert models.tfidf_query(index, "pump seal", k=3) == \
            models.tfidf_query(clone, "pump seal", k=3)
        assert clone.query_defaults == {"top_k": 2}

    def test_majority_roundtrip(self):
        clone = models.deserialize_model(
            models.serialize_model(models.MajorityModel("X")))
        assert clone.label == "X"

    def test_unknown_version_rejected(self):
        data = bytearray(models.serialize_model(models.MajorityModel("X")))
        data[4] = 99  # bump the version halfword
        with pytest.raises(ValidationError, match="version"):
            models.deserialize_model(bytes(data))

    def test_truncated_rejected(self):
        data = models.serialize_model(models.nb_train(NB_DOCS, alpha=1.0))
        with pytest.raises(ValidationError):
            models.deserialize_model(data[:len(data) // 2])

    def test_bad_magic_rejected(self):
        with pytest.raises(ValidationError):
            models.deserialize_model(b"garbage-bytes-here")
