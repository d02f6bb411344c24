"""Reference model families: multinomial naive Bayes, binary logistic
regression, TF-IDF cosine similarity, and a majority baseline.

All four families are deterministic functions of their training inputs, and
every artifact round-trips bit-exactly through ``serialize_model`` /
``deserialize_model`` (versioned binary: JSON header + little-endian float64
payload).  Tie-breaking is lexicographic wherever a tie is possible.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

FAMILY_MAJORITY = "majority"
FAMILY_NB = "nb-multinomial"
FAMILY_LOGREG = "logreg-binary"
FAMILY_TFIDF = "tfidf-knn"

MODEL_FAMILIES = (FAMILY_MAJORITY, FAMILY_NB, FAMILY_LOGREG, FAMILY_TFIDF)

_FORMAT_MAGIC = b"MFAR"
_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on maximal runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _sigmoid(z: float) -> float:
    # tanh form: stable on both tails, exact 0.5 at z = 0
    return 0.5 * (1.0 + math.tanh(z / 2.0))


# ---------------------------------------------------------------------------
# Majority baseline
# ---------------------------------------------------------------------------


@dataclass
class MajorityModel:
    label: str
    family: str = FAMILY_MAJORITY


def majority_train(labels: list[str]) -> MajorityModel:
    """Most frequent label; ties go to the lexicographically smallest."""
    if not labels:
        raise ValidationError("cannot train a majority model on empty labels")
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    return MajorityModel(label=best)


def majority_predict(model: MajorityModel) -> str:
    return model.label


# ---------------------------------------------------------------------------
# Multinomial naive Bayes
# ---------------------------------------------------------------------------


@dataclass
class NBModel:
    """Multinomial NB with Laplace smoothing.

    The per-class token distribution reserves one smoothed slot for tokens
    never seen in training, so for every class

        sum_{t in vocabulary} P(t|c) + P(unseen|c) == 1

    holds exactly.  ``classes`` is sorted lexicographically and prediction
    ties resolve to the smaller label.
    """

    classes: list[str]
    log_priors: dict[str, float]
    token_log_likelihoods: dict[str, dict[str, float]]  # class -> token -> log P
    unseen_log_likelihood: dict[str, float]  # class -> log P for out-of-vocab tokens
    vocabulary: list[str]
    alpha: float
    text_fields: list[str] = field(default_factory=lambda: ["text"])
    family: str = FAMILY_NB


def nb_train(docs: list[tuple[str, str]], alpha: float = 1.0,
             text_fields: list[str] | None = None) -> NBModel:
    """Train multinomial NB on (text, label) pairs.

    P(t|c) = (count(t,c) + alpha) / (total_c + alpha * (|V| + 1)); the +1
    funds the unseen-token slot.  Priors follow class frequency.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    labels = sorted({label for _, label in docs})
    if len(labels) < 2:
        raise ValidationError("naive Bayes needs at least 2 distinct labels")

    token_counts: dict[str, dict[str, int]] = {c: {} for c in labels}
    class_totals: dict[str, int] = {c: 0 for c in labels}
    doc_counts: dict[str, int] = {c: 0 for c in labels}
    vocab: set[str] = set()
    for text, label in docs:
        doc_counts[label] += 1
        for tok in tokenize(text):
            vocab.add(tok)
            token_counts[label][tok] = token_counts[label].get(tok, 0) + 1
            class_totals[label] += 1

    vocabulary = sorted(vocab)
    v_plus_unseen = len(vocabulary) + 1
    n_docs = len(docs)

    log_priors = {c: math.log(doc_counts[c] / n_docs) for c in labels}
    likelihoods: dict[str, dict[str, float]] = {}
    unseen: dict[str, float] = {}
    for c in labels:
        denom = class_totals[c] + alpha * v_plus_unseen
        likelihoods[c] = {
            t: math.log((token_counts[c].get(t, 0) + alpha) / denom) for t in vocabulary
        }
        unseen[c] = math.log(alpha / denom)

    return NBModel(
        classes=labels,
        log_priors=log_priors,
        token_log_likelihoods=likelihoods,
        unseen_log_likelihood=unseen,
        vocabulary=vocabulary,
        alpha=alpha,
        text_fields=list(text_fields or ["text"]),
    )


def nb_log_posteriors(model: NBModel, text: str) -> dict[str, float]:
    """Unnormalized log posterior per class (prior + token likelihoods)."""
    tokens = tokenize(text)
    scores: dict[str, float] = {}
    for c in model.classes:
        total = model.log_priors[c]
        lik = model.token_log_likelihoods[c]
        unseen = model.unseen_log_likelihood[c]
        for tok in tokens:
            total += lik.get(tok, unseen)
        scores[c] = total
    return scores


def nb_predict(model: NBModel, text: str) -> tuple[str, dict[str, float]]:
    """Argmax label plus the per-class log posteriors.

    Empty text degenerates to the prior argmax; ties break lexicographically
    (classes are iterated in sorted order and strict ``>`` keeps the first).
    """
    scores = nb_log_posteriors(model, text)
    best = model.classes[0]
    for c in model.classes[1:]:
        if scores[c] > scores[best]:
            best = c
    return best, scores


def nb_probabilities(model: NBModel, text: str) -> dict[str, float]:
    """Softmax-normalized posterior probabilities (max-shifted for stability)."""
    scores = nb_log_posteriors(model, text)
    peak = max(scores.values())
    exps = {c: math.exp(s - peak) for c, s in scores.items()}
    z = sum(exps[c] for c in model.classes)
    return {c: exps[c] / z for c in model.classes}


# ---------------------------------------------------------------------------
# Binary logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LRModel:
    """Logistic regression over standardized features.

    ``feature_names`` lists the retained features (zero-variance columns are
    dropped at train time and recorded in ``dropped_features``).  For models
    trained from tabular records, ``numeric_fields`` / ``categorical_fields``
    / ``categories`` record the encoding so raw records can be scored.
    """

    weights: np.ndarray
    bias: float
    feature_names: list[str]
    means: np.ndarray
    stds: np.ndarray
    classes: list[str]  # [negative, positive], lexicographic
    dropped_features: list[str] = field(default_factory=list)
    numeric_fields: list[str] = field(default_factory=list)
    categorical_fields: list[str] = field(default_factory=list)
    categories: dict[str, list[str]] = field(default_factory=dict)
    loss_curve: list[float] | None = None
    family: str = FAMILY_LOGREG


def logreg_loss(X, y, w, b: float) -> float:
    """Mean log-loss; log(1 + e^z) - y z via logaddexp for stability."""
    z = np.asarray(X) @ np.asarray(w) + b
    return float(np.mean(np.logaddexp(0.0, z) - np.asarray(y) * z))


def logreg_gradient(X, y, w, b: float) -> tuple[np.ndarray, float]:
    """Analytic gradient of the mean log-loss w.r.t. (w, b)."""
    X = np.asarray(X)
    y = np.asarray(y)
    z = X @ np.asarray(w) + b
    p = 0.5 * (1.0 + np.tanh(z / 2.0))
    err = p - y
    return (X.T @ err) / len(y), float(np.mean(err))


def logreg_train(X, y, lr: float = 0.1, iters: int = 1000,
                 feature_names: list[str] | None = None,
                 classes: list[str] | None = None,
                 record_loss: bool = False) -> LRModel:
    """Full-batch gradient descent on mean log-loss from zero initialization.

    Features are standardized to (mean 0, std 1); zero-variance columns are
    dropped and recorded.  Deterministic: no randomness anywhere.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D matrix")
    n, f = X.shape
    if n < 2:
        raise ValidationError("need at least 2 training rows")
    if not np.isfinite(X).all():
        raise ValidationError("non-finite feature values")
    uniq = np.unique(y)
    if uniq.size < 2:
        raise ValidationError("labels are single-class; cannot fit a separator")
    if not set(uniq.tolist()) <= {0.0, 1.0}:
        raise ValidationError("y must be a 0/1 vector")

    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(f)]
    if len(names) != f:
        raise ValidationError("feature_names length does not match X columns")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    keep = stds > 0.0
    dropped = [names[i] for i in range(f) if not keep[i]]
    kept_names = [names[i] for i in range(f) if keep[i]]
    if not kept_names:
        raise ValidationError("all features have zero variance")

    Xs = (X[:, keep] - means[keep]) / stds[keep]
    w = np.zeros(Xs.shape[1], dtype=np.float64)
    b = 0.0
    losses: list[float] = []
    for _ in range(iters):
        if record_loss:
            losses.append(logreg_loss(Xs, y, w, b))
        grad_w, grad_b = logreg_gradient(Xs, y, w, b)
        w = w - lr * grad_w
        b = b - lr * grad_b

    return LRModel(
        weights=w,
        bias=b,
        feature_names=kept_names,
        means=means[keep],
        stds=stds[keep],
        classes=list(classes) if classes else ["0", "1"],
        dropped_features=dropped,
        loss_curve=losses if record_loss else None,
    )


def logreg_predict(model: LRModel, x) -> tuple[float, bool]:
    """Score sigmoid(w . standardize(x) + b); decision is score >= 0.5."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(model.feature_names),):
        raise ValidationError(
            f"expected {len(model.feature_names)} features, got {x.shape}"
        )
    xs = (x - model.means) / model.stds
    z = float(xs @ model.weights) + model.bias
    score = _sigmoid(z)
    return score, score >= 0.5


def build_categories(rows: list[dict], categorical_fields: list[str]) -> dict[str, list[str]]:
    """Sorted distinct values per categorical field (the one-hot dictionary)."""
    cats: dict[str, list[str]] = {}
    for fld in categorical_fields:
        cats[fld] = sorted({str(r.get(fld, "")) for r in rows})
    return cats


def encode_records(rows: list[dict], numeric_fields: list[str],
                   categorical_fields: list[str],
                   categories: dict[str, list[str]]) -> tuple[np.ndarray, list[str]]:
    """Numerics as-is, categoricals one-hot against the given dictionary.

    Unseen category values encode to all-zero indicators.
    """
    names: list[str] = list(numeric_fields)
    for fld in categorical_fields:
        names.extend(f"{fld}={v}" for v in categories[fld])
    mat = np.zeros((len(rows), len(names)), dtype=np.float64)
    for i, row in enumerate(rows):
        col = 0
        for fld in numeric_fields:
            mat[i, col] = float(row[fld])
            col += 1
        for fld in categorical_fields:
            vals = categories[fld]
            v = str(row.get(fld, ""))
            if v in vals:
                mat[i, col + vals.index(v)] = 1.0
            col += len(vals)
    return mat, names


def logreg_train_records(rows: list[dict], labels: list[str], lr: float = 0.1,
                         iters: int = 1000, numeric_fields: list[str] | None = None,
                         categorical_fields: list[str] | None = None,
                         record_loss: bool = False) -> LRModel:
    """Train from tabular records; the encoding is recorded on the artifact."""
    numeric_fields = list(numeric_fields or [])
    categorical_fields = list(categorical_fields or [])
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise ValidationError(f"binary training needs exactly 2 label values, got {classes}")
    y = np.array([1.0 if lab == classes[1] else 0.0 for lab in labels])
    categories = build_categories(rows, categorical_fields)
    X, names = encode_records(rows, numeric_fields, categorical_fields, categories)
    model = logreg_train(X, y, lr=lr, iters=iters, feature_names=names,
                         classes=classes, record_loss=record_loss)
    model.numeric_fields = numeric_fields
    model.categorical_fields = categorical_fields
    model.categories = categories
    return model


def logreg_predict_record(model: LRModel, record: dict) -> tuple[float, str]:
    """Score a raw record through the recorded encoding; returns (score, class)."""
    X, names = encode_records([record], model.numeric_fields,
                              model.categorical_fields, model.categories)
    kept = [names.index(n) for n in model.feature_names]
    score, decision = logreg_predict(model, X[0, kept])
    return score, model.classes[1] if decision else model.classes[0]


# ---------------------------------------------------------------------------
# TF-IDF cosine similarity index
# ---------------------------------------------------------------------------


@dataclass
class TfidfDoc:
    doc_id: str
    counts: dict[str, int]
    timestamp: float | None  # epoch seconds
    status: str


@dataclass
class TfidfIndex:
    """Document index scored by cosine over TF-IDF weights.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1; ``norms`` holds each document's
    weighted L2 norm so stored vectors are unit-norm after weighting.
    """

    documents: list[TfidfDoc]
    idf: dict[str, float]
    norms: list[float]
    text_field: str = "text"
    query_defaults: dict = field(default_factory=dict)
    family: str = FAMILY_TFIDF


def tfidf_index(docs: list[tuple[str, str, float | None, str]],
                text_field: str = "text",
                query_defaults: dict | None = None) -> TfidfIndex:
    """Build an index from (id, text, epoch timestamp or None, status) rows."""
    documents: list[TfidfDoc] = []
    df: dict[str, int] = {}
    for doc_id, text, ts, status in docs:
        counts: dict[str, int] = {}
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
        for tok in counts:
            df[tok] = df.get(tok, 0) + 1
        documents.append(TfidfDoc(str(doc_id), counts, ts, status))

    n = len(documents)
    idf = {t: math.log((1 + n) / (1 + df_t)) + 1.0 for t, df_t in sorted(df.items())}
    norms = []
    for doc in documents:
        sq = 0.0
        for tok in sorted(doc.counts):
            w = doc.counts[tok] * idf[tok]
            sq += w * w
        norms.append(math.sqrt(sq))
    return TfidfIndex(documents=documents, idf=idf, norms=norms,
                      text_field=text_field, query_defaults=dict(query_defaults or {}))


def _cosine(index: TfidfIndex, query_counts: dict[str, int], query_norm: float,
            doc: TfidfDoc, doc_norm: float) -> float:
    if query_norm == 0.0 or doc_norm == 0.0:
        return 0.0
    dot = 0.0
    for tok in sorted(query_counts):
        if tok in doc.counts:
            w = index.idf[tok]
            dot += (query_counts[tok] * w) * (doc.counts[tok] * w)
    return dot / (query_norm * doc_norm)


def tfidf_query(index: TfidfIndex, query_text: str, k: int,
                status_filter: str | None = None,
                window: tuple[float, int] | None = None) -> list[tuple[str, float]]:
    """Top-k (id, score) by cosine, zero scores excluded.

    ``window`` is (as_of epoch seconds, days): candidates must satisfy
    as_of - days*86400 <= timestamp <= as_of.  Descending score, ties by
    ascending id.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    counts: dict[str, int] = {}
    for tok in tokenize(query_text):
        if tok in index.idf:  # vocabulary fixed at index time
            counts[tok] = counts.get(tok, 0) + 1
    qsq = 0.0
    for tok in sorted(counts):
        w = counts[tok] * index.idf[tok]
        qsq += w * w
    qnorm = math.sqrt(qsq)

    scored: list[tuple[str, float]] = []
    for doc, norm in zip(index.documents, index.norms):
        if status_filter is not None and doc.status != status_filter:
            continue
        if window is not None:
            as_of, days = window
            if doc.timestamp is None:
                continue
            if not (as_of - days * 86400.0 <= doc.timestamp <= as_of):
                continue
        score = _cosine(index, counts, qnorm, doc, norm)
        if score > 0.0:
            scored.append((doc.doc_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def tfidf_self_retrieval(index: TfidfIndex) -> float:
    """Mean top-1 cosine to each doc's nearest neighbor excluding itself."""
    n = len(index.documents)
    if n < 2:
        return 0.0
    total = 0.0
    for i, doc in enumerate(index.documents):
        best = 0.0
        for j, other in enumerate(index.documents):
            if i == j:
                continue
            s = _cosine(index, doc.counts, index.norms[i], other, index.norms[j])
            if s > best:
                best = s
        total += best
    return total / n


# ---------------------------------------------------------------------------
# Serialization: MFAR magic, uint16 version, JSON header, float64 payload
# ---------------------------------------------------------------------------


def _pack(header: dict, payload: np.ndarray) -> bytes:
    header = dict(header)
    header["payload_len"] = int(payload.size)
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return (_FORMAT_MAGIC + struct.pack("<H", _FORMAT_VERSION)
            + struct.pack("<I", len(raw)) + raw
            + payload.astype("<f8").tobytes())


def serialize_model(model) -> bytes:
    """Serialize any model family to the versioned binary artifact format."""
    if isinstance(model, MajorityModel):
        return _pack({"family": FAMILY_MAJORITY, "label": model.label},
                     np.zeros(0))
    if isinstance(model, NBModel):
        c, v = len(model.classes), len(model.vocabulary)
        payload = np.empty(c + c * v + c, dtype=np.float64)
        payload[:c] = [model.log_priors[cl] for cl in model.classes]
        off = c
        for cl in model.classes:
            lik = model.token_log_likelihoods[cl]
            payload[off:off + v] = [lik[t] for t in model.vocabulary]
            off += v
        payload[off:off + c] = [model.unseen_log_likelihood[cl] for cl in model.classes]
        return _pack({
            "family": FAMILY_NB, "classes": model.classes,
            "vocabulary": model.vocabulary, "alpha": model.alpha,
            "text_fields": model.text_fields,
        }, payload)
    if isinstance(model, LRModel):
        f = len(model.feature_names)
        payload = np.concatenate([
            model.means, model.stds, model.weights, np.array([model.bias]),
        ])
        return _pack({
            "family": FAMILY_LOGREG, "feature_names": model.feature_names,
            "classes": model.classes, "dropped_features": model.dropped_features,
            "numeric_fields": model.numeric_fields,
            "categorical_fields": model.categorical_fields,
            "categories": model.categories, "n_features": f,
        }, payload)
    if isinstance(model, TfidfIndex):
        vocab = sorted(index_tok for index_tok in model.idf)
        tok_pos = {t: i for i, t in enumerate(vocab)}
        chunks = [np.array([model.idf[t] for t in vocab]),
                  np.array(model.norms, dtype=np.float64)]
        doc_meta = []
        for doc in model.documents:
            toks = sorted(doc.counts)
            doc_meta.append({
                "id": doc.doc_id,
                "ts": doc.timestamp,
                "status": doc.status,
                "nnz": len(toks),
            })
            chunks.append(np.array([tok_pos[t] for t in toks], dtype=np.float64))
            chunks.append(np.array([doc.counts[t] for t in toks], dtype=np.float64))
        payload = np.concatenate(chunks) if chunks else np.zeros(0)
        return _pack({
            "family": FAMILY_TFIDF, "vocabulary": vocab, "docs": doc_meta,
            "text_field": model.text_field, "query_defaults": model.query_defaults,
        }, payload)
    raise ValidationError(f"unknown model type {type(model).__name__}")


def deserialize_model(data: bytes):
    """Inverse of ``serialize_model``; strict about magic, version, length."""
    if len(data) < 10 or data[:4] != _FORMAT_MAGIC:
        raise ValidationError("not a model artifact (bad magic)")
    (version,) = struct.unpack("<H", data[4:6])
    if version != _FORMAT_VERSION:
        raise ValidationError(f"unsupported model artifact format version {version}")
    (hlen,) = struct.unpack("<I", data[6:10])
    if len(data) < 10 + hlen:
        raise ValidationError("truncated model artifact header")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"corrupt model artifact header: {exc}") from exc
    payload_bytes = data[10 + hlen:]
    expected = header.get("payload_len", 0) * 8
    if len(payload_bytes) != expected:
        raise ValidationError("truncated model artifact payload")
    payload = np.frombuffer(payload_bytes, dtype="<f8")

    family = header.get("family")
    if family == FAMILY_MAJORITY:
        return MajorityModel(label=header["label"])
    if family == FAMILY_NB:
        classes, vocab = header["classes"], header["vocabulary"]
        c, v = len(classes), len(vocab)
        log_priors = {cl: float(payload[i]) for i, cl in enumerate(classes)}
        liks: dict[str, dict[str, float]] = {}
        off = c
        for cl in classes:
            row = payload[off:off + v]
            liks[cl] = {t: float(row[i]) for i, t in enumerate(vocab)}
            off += v
        unseen = {cl: float(payload[off + i]) for i, cl in enumerate(classes)}
        return NBModel(classes=classes, log_priors=log_priors,
                       token_log_likelihoods=liks, unseen_log_likelihood=unseen,
                       vocabulary=vocab, alpha=float(header["alpha"]),
                       text_fields=list(header["text_fields"]))
    if family == FAMILY_LOGREG:
        f = header["n_features"]
        return LRModel(
            weights=payload[2 * f:3 * f].copy(),
            bias=float(payload[3 * f]),
            feature_names=header["feature_names"],
            means=payload[:f].copy(),
            stds=payload[f:2 * f].copy(),
            classes=header["classes"],
            dropped_features=header["dropped_features"],
            numeric_fields=header["numeric_fields"],
            categorical_fields=header["categorical_fields"],
            categories=header["categories"],
        )
    if family == FAMILY_TFIDF:
        vocab = header["vocabulary"]
        v = len(vocab)
        idf = {t: float(payload[i]) for i, t in enumerate(vocab)}
        n_docs = len(header["docs"])
        norms = [float(x) for x in payload[v:v + n_docs]]
        off = v + n_docs
        documents = []
        for meta in header["docs"]:
            nnz = meta["nnz"]
            idxs = payload[off:off + nnz]
            vals = payload[off + nnz:off + 2 * nnz]
            off += 2 * nnz
            counts = {vocab[int(i)]: int(cnt) for i, cnt in zip(idxs, vals)}
            documents.append(TfidfDoc(meta["id"], counts, meta["ts"], meta["status"]))
        return TfidfIndex(documents=documents, idf=idf, norms=norms,
                          text_field=header["text_field"],
                          query_defaults=header.get("query_defaults", {}))
    raise ValidationError(f"unknown model family {family!r}")


def model_family(model) -> str:
    return model.family
