"""Evaluation metrics against brute-force oracles and hand-computed cases."""

import csv
import json
import math
import os

import numpy as np
import pytest

from gradsurgeon.errors import ValidationError
from gradsurgeon.metrics_eval import (
    accuracy,
    average_precision,
    export_projection_2d,
    knn_overlap,
    prior_drift,
    text_only_probe,
    top2_projection,
    write_metrics_jsonl,
)
from gradsurgeon.numerics import Rng


# ---------------------------------------------------------------- accuracy

def test_accuracy_threshold_tie_predicts_real():
    logits = [0.0, 0.0, 0.1, -0.1]
    labels = [0, 1, 1, 0]
    rep = accuracy(logits, labels)
    # ties at the threshold go to label 0: predictions are 0,0,1,0
    assert rep.accuracy_real == 1.0
    assert rep.accuracy_fake == 0.5
    assert rep.accuracy_overall == 0.75


def test_accuracy_per_domain_breakdown():
    logits = [1.0, -1.0, 1.0, -1.0]
    labels = [1, 0, 0, 1]
    domains = ["a", "a", "b", "b"]
    rep = accuracy(logits, labels, domains=domains)
    assert rep.per_domain == {"a": 1.0, "b": 0.0}
    assert rep.accuracy_overall == 0.5


def test_accuracy_requires_both_labels():
    with pytest.raises(ValidationError):
        accuracy([1.0, 2.0], [1, 1])
    with pytest.raises(ValidationError):
        accuracy([], [])


# ---------------------------------------------------------------- average precision

def ap_oracle(scores, labels):
    # independent implementation: explicit stable ranking and counting
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    total = 0.0
    hits = 0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / sum(labels)


def test_average_precision_hand_case():
    assert math.isclose(
        average_precision([3.0, 2.0, 1.0], [1, 0, 1]), (1.0 + 2.0 / 3.0) / 2.0
    )
    assert average_precision([1.0, 2.0], [0, 1]) == 1.0
    assert average_precision([2.0, 1.0], [0, 1]) == 0.5


def test_average_precision_matches_oracle_with_heavy_ties():
    rng = Rng(501)
    for trial in range(50):
        r = rng.derive(trial)
        n = 5 + trial % 40
        # few distinct scores force tie handling to matter
        scores = np.floor(r.uniform(n) * 4.0)
        labels = (r.derive("y").uniform(n) < 0.4).astype(int)
        if labels.sum() == 0:
            labels[0] = 1
        got = average_precision(scores, labels.tolist())
        want = ap_oracle(scores.tolist(), labels.tolist())
        assert math.isclose(got, want, rel_tol=1e-12)


def test_average_precision_requires_positives():
    with pytest.raises(ValidationError):
        average_precision([1.0, 2.0], [0, 0])


def test_perfect_and_inverted_rankings():
    labels = [1, 1, 0, 0]
    assert average_precision([4.0, 3.0, 2.0, 1.0], labels) == 1.0
    inverted = average_precision([1.0, 2.0, 3.0, 4.0], labels)
    assert math.isclose(inverted, (1.0 / 3.0 + 2.0 / 4.0) / 2.0)


# ---------------------------------------------------------------- drift

def test_prior_drift_hand_cases():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert prior_drift([e1], [e1.copy()]) == 0.0
    assert prior_drift([e1], [e2]) == 1.0
    assert prior_drift([e1], [-e1]) == 2.0
    assert prior_drift([np.zeros(2)], [e1]) == 1.0  # zero vector: no direction
    mixed = prior_drift([e1, e1], [e1.copy(), e2])
    assert math.isclose(mixed, 0.5)
    with pytest.raises(ValidationError):
        prior_drift([], [])


def test_prior_drift_scale_invariance():
    rng = Rng(502)
    a = [rng.derive(i).gaussian(8, 0.0, 1.0) for i in range(10)]
    b = [rng.derive(f"b{i}").gaussian(8, 0.0, 1.0) for i in range(10)]
    d1 = prior_drift(a, b)
    d2 = prior_drift([3.0 * v for v in a], [0.25 * v for v in b])
    assert abs(d1 - d2) < 1e-12


# ---------------------------------------------------------------- knn overlap

def knn_oracle(feats, k):
    n = len(feats)
    sets = []
    for i in range(n):
        dists = []
        for j in range(n):
            if j == i:
                continue
            d = sum((feats[i][c] - feats[j][c]) ** 2 for c in range(len(feats[i])))
            dists.append((d, j))
        dists.sort(key=lambda t: (t[0], t[1]))  # ties by index order
        sets.append({j for _, j in dists[:k]})
    return sets


def test_knn_overlap_matches_brute_force_oracle():
    rng = Rng(503)
    for trial in range(10):
        r = rng.derive(trial)
        n, d, k = 20, 4, 5
        student = [r.derive(f"s{i}").gaussian(d, 0.0, 1.0) for i in range(n)]
        teacher = [r.derive(f"t{i}").gaussian(d, 0.0, 1.0) for i in range(n)]
        got = knn_overlap(student, teacher, k)
        ss = knn_oracle(student, k)
        ts = knn_oracle(teacher, k)
        want = np.mean([len(ss[i] & ts[i]) / k for i in range(n)])
        assert math.isclose(got, want, rel_tol=1e-12)


def test_knn_overlap_with_exact_tie_distances():
    # four corners of a square: both neighbors at distance 1 tie for 1-NN
    square = [np.array(p, dtype=float) for p in [(0, 0), (0, 1), (1, 0), (1, 1)]]
    got = knn_overlap(square, [p.copy() for p in square], 1)
    assert got == 1.0  # identical inputs resolve ties identically
    oracle_sets = knn_oracle(square, 1)
    assert oracle_sets[0] == {1}  # index order breaks the (0,1) vs (1,0) tie


def test_knn_overlap_identical_is_one_and_validation():
    rng = Rng(504)
    feats = [rng.derive(i).gaussian(3, 0.0, 1.0) for i in range(12)]
    assert knn_overlap(feats, [f.copy() for f in feats], 11) == 1.0
    with pytest.raises(ValidationError):
        knn_overlap(feats, feats, 12)  # k must leave room after self-exclusion
    with pytest.raises(ValidationError):
        knn_overlap(feats, feats, 0)


def test_knn_excludes_self_even_with_duplicates():
    # two coincident points: each one's 1-NN is the other, not itself
    pts = [np.zeros(2), np.zeros(2), np.array([5.0, 5.0])]
    sets = knn_oracle(pts, 1)
    assert sets[0] == {1} and sets[1] == {0}
    assert knn_overlap(pts, [p.copy() for p in pts], 1) == 1.0


# ---------------------------------------------------------------- probe

def test_text_only_probe_on_tiny_benchmark(tiny_split):
    acc = text_only_probe(tiny_split.train, tiny_split.test_in_domain)
    assert 0.5 < acc < 0.8  # semantic channel alone is informative but capped


# ---------------------------------------------------------------- pca

def test_top2_projection_matches_eigh_oracle():
    rng = Rng(505)
    for trial in range(5):
        r = rng.derive(trial)
        n, d = 300, 6
        stretch = np.array([5.0, 3.0, 1.0, 0.5, 0.2, 0.1])
        feats = np.stack([r.derive(i).gaussian(d, 0.0, 1.0) * stretch for i in range(n)])
        centered, v1, v2, l1, l2 = top2_projection(feats)
        assert np.max(np.abs(centered.mean(axis=0))) < 1e-12
        cov = centered.T @ centered / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        assert abs(l1 - evals[-1]) < 1e-8 * evals[-1]
        assert abs(l2 - evals[-2]) < 1e-8 * evals[-1]
        assert abs(abs(np.dot(v1, evecs[:, -1])) - 1.0) < 1e-6
        assert abs(abs(np.dot(v2, evecs[:, -2])) - 1.0) < 1e-6
        assert abs(np.dot(v1, v2)) < 1e-8
        assert l1 >= l2 > 0.0


def test_export_projection_csv_round_trip(tmp_path):
    rng = Rng(506)
    feats = [rng.derive(i).gaussian(5, 0.0, 1.0) for i in range(40)]
    labels = [i % 2 for i in range(40)]
    domains = ["a" if i < 20 else "b" for i in range(40)]
    path = os.path.join(tmp_path, "proj.csv")
    export_projection_2d(feats, labels, domains, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "label", "domain", "pc1", "pc2"]
    assert len(rows) == 41
    # repr round-trip: the written strings parse back to exact float64s
    centered, v1, v2, _, _ = top2_projection(np.stack(feats))
    want_pc1 = centered @ v1
    got_pc1 = np.array([float(r[3]) for r in rows[1:]])
    assert np.max(np.abs(got_pc1 - want_pc1)) < 1e-12
    with pytest.raises(ValidationError):
        export_projection_2d(feats, labels[:3], domains, path)


def test_write_metrics_jsonl_round_trip(tmp_path):
    path = os.path.join(tmp_path, "m.jsonl")
    entries = [{"epoch": 0, "loss": 0.5}, {"epoch": 1, "loss": 0.25}]
    write_metrics_jsonl(path, entries)
    with open(path) as fh:
        back = [json.loads(line) for line in fh]
    assert back == entries
