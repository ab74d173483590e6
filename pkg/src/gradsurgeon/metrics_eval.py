"""Evaluation metrics: thresholded accuracy, average precision, prior-drift
measures, the text-only probe, and 2-D projection export for plots.

Decision rule everywhere: predict fake iff logit > 0; a logit exactly at
the threshold predicts real.  Average precision ranks by descending score
with ties kept in input order (stable sort).  Prior drift is the mean
cosine distance between student and teacher features of the same samples;
kNN overlap compares Euclidean neighborhoods of the two feature sets with
self excluded and distance ties broken by index order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from gradsurgeon.errors import DimensionMismatchError, ValidationError
from gradsurgeon.numerics import Rng, dot, l2_norm, matvec
from gradsurgeon.trainer import fit_logistic_head


@dataclass(frozen=True)
class EvalReport:
    accuracy_real: float
    accuracy_fake: float
    accuracy_overall: float
    average_precision: float
    per_domain: dict

    def as_dict(self) -> dict:
        return {
            "accuracy_real": self.accuracy_real,
            "accuracy_fake": self.accuracy_fake,
            "accuracy_overall": self.accuracy_overall,
            "average_precision": self.average_precision,
            "per_domain": dict(sorted(self.per_domain.items())),
        }


@dataclass(frozen=True)
class DriftReport:
    mean_cosine_distance: float
    knn_overlap: float
    k: int

    def as_dict(self) -> dict:
        return {
            "mean_cosine_distance": self.mean_cosine_distance,
            "knn_overlap": self.knn_overlap,
            "k": self.k,
        }


def accuracy(logits, labels, threshold: float = 0.0, domains=None) -> EvalReport:
    """Per-label, overall, and per-domain accuracy plus average precision."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.shape[0] == 0:
        raise ValidationError("accuracy: empty input")
    if logits.shape[0] != labels.shape[0]:
        raise DimensionMismatchError(logits.shape[0], labels.shape[0], op="accuracy")
    pred = logits > threshold  # tie predicts real
    real = labels == 0
    fake = labels == 1
    if not real.any() or not fake.any():
        raise ValidationError("accuracy: needs both labels present")
    correct = pred == fake
    per_domain = {}
    if domains is not None:
        domains = np.asarray(domains)
        for dom in sorted(set(domains.tolist())):
            sel = domains == dom
            per_domain[dom] = float(np.mean(correct[sel]))
    return EvalReport(
        accuracy_real=float(np.mean(correct[real])),
        accuracy_fake=float(np.mean(correct[fake])),
        accuracy_overall=float(np.mean(correct)),
        average_precision=average_precision(logits, labels),
        per_domain=per_domain,
    )


def average_precision(scores, labels) -> float:
    """Area under the precision-recall curve over the descending ranking."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape[0] != labels.shape[0]:
        raise DimensionMismatchError(scores.shape[0], labels.shape[0], op="average_precision")
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise ValidationError("average_precision: no positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    total = 0.0
    for k, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / k
    return total / n_pos


def prior_drift(student_feats, teacher_feats) -> float:
    """Mean of 1 - cosine(f_i, f^T_i). Bitwise-identical pairs contribute
    exactly 0; a zero vector in a non-identical pair has no direction, so
    that pair counts as maximally dissimilar (contributes 1)."""
    if len(student_feats) != len(teacher_feats):
        raise DimensionMismatchError(len(student_feats), len(teacher_feats), op="prior_drift")
    if len(student_feats) == 0:
        raise ValidationError("prior_drift: empty input")
    total = 0.0
    for f_s, f_t in zip(student_feats, teacher_feats):
        if f_s.shape[0] != f_t.shape[0]:
            raise DimensionMismatchError(f_s.shape[0], f_t.shape[0], op="prior_drift")
        if np.array_equal(f_s, f_t):
            continue  # identical vectors contribute exactly 0, no sqrt rounding
        denom = l2_norm(f_s) * l2_norm(f_t)
        cos = dot(f_s, f_t) / denom if denom > 0.0 else 0.0
        total += 1.0 - cos
    return total / len(student_feats)


def _knn_sets(feats: np.ndarray, k: int) -> list:
    # squared-distance expansion avoids the n x n x d broadcast
    sq = np.sum(feats * feats, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (feats @ feats.T)
    np.fill_diagonal(d2, np.inf)  # self excluded
    sets = []
    for i in range(feats.shape[0]):
        order = np.argsort(d2[i], kind="stable")  # ties fall back to index order
        sets.append(set(order[:k].tolist()))
    return sets


def knn_overlap(student_feats, teacher_feats, k: int) -> float:
    """Mean |kNN_s(i) intersect kNN_t(i)| / k under Euclidean distance."""
    s = np.asarray(student_feats, dtype=np.float64)
    t = np.asarray(teacher_feats, dtype=np.float64)
    if s.shape[0] != t.shape[0]:
        raise DimensionMismatchError(s.shape[0], t.shape[0], op="knn_overlap")
    n = s.shape[0]
    if k < 1 or n <= k:
        raise ValidationError(f"knn_overlap: need n > k >= 1, got n={n}, k={k}")
    sets_s = _knn_sets(s, k)
    sets_t = _knn_sets(t, k)
    return float(np.mean([len(a & b) / k for a, b in zip(sets_s, sets_t)]))


def text_only_probe(train_records, test_records, steps: int = 500, lr: float = 0.1) -> float:
    """Fit a logistic head on the stored semantic features alone and report
    test accuracy: how far label information leaks through the text branch."""
    if not train_records or not test_records:
        raise ValidationError("text_only_probe: empty split")
    feats = np.array([rec.t_sem for rec in train_records])
    labels = np.array([rec.label for rec in train_records], dtype=np.float64)
    head = fit_logistic_head(feats, labels, steps, lr)
    test_feats = np.array([rec.t_sem for rec in test_records])
    test_labels = np.array([rec.label for rec in test_records])
    logits = matvec(test_feats, head.w) + head.b
    pred = logits > 0.0
    return float(np.mean(pred == (test_labels == 1)))


def _power_iteration(cov: np.ndarray, rng: Rng, tol: float = 1e-10, max_iter: int = 10000):
    v = rng.gaussian(cov.shape[0])
    v /= l2_norm(v)
    for _ in range(max_iter):
        w = matvec(cov, v)
        norm = l2_norm(w)
        if norm == 0.0:
            return v, 0.0  # null space: any unit vector is an eigenvector
        w /= norm
        # convergence up to sign
        if min(l2_norm(w - v), l2_norm(w + v)) < tol:
            v = w
            break
        v = w
    return v, dot(matvec(cov, v), v)


def top2_projection(feats: np.ndarray) -> tuple:
    """Top-2 principal directions by power iteration with deflation."""
    n = feats.shape[0]
    if n < 3:
        raise ValidationError(f"projection needs n >= 3, got {n}")
    centered = feats - feats.mean(axis=0)
    cov = (centered.T @ centered) / (n - 1)
    rng = Rng(0).derive("pca")
    v1, lam1 = _power_iteration(cov, rng)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, lam2 = _power_iteration(deflated, rng)
    return centered, v1, v2, lam1, lam2


def export_projection_2d(feats, labels, domains, path, ids=None) -> None:
    """Write id,label,domain,pc1,pc2 rows of the 2-D principal projection."""
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    if ids is None:
        ids = [f"s{i:05d}" for i in range(n)]
    if not (len(ids) == len(labels) == len(domains) == n):
        raise ValidationError("export_projection_2d: misaligned inputs")
    centered, v1, v2, _, _ = top2_projection(feats)
    pc1 = matvec(centered, v1)
    pc2 = matvec(centered, v2)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "domain", "pc1", "pc2"])
        for i in range(n):
            writer.writerow([ids[i], int(labels[i]), domains[i], repr(float(pc1[i])), repr(float(pc2[i]))])


def write_metrics_jsonl(path, entries) -> None:
    """One JSON object per line; each entry is a dict already shaped by callers."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
