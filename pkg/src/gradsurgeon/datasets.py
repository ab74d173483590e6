"""Synthetic shortcut benchmark and feature-record file IO.

Each record's raw input is a concatenation of three blocks.  The artifact
block is shifted by +/- artifact_margin according to the label in every
domain: the generalizable cue.  The semantic block is shifted by +/- 1
according to a pseudo-label that agrees with the true label with
probability corr_in in-domain and corr_out cross-domain: the shortcut.  The
noise block is pure N(0, I).  The stored semantic feature t_sem is the
semantic block plus N(0, 0.1^2) jitter, living in the same d_semantic-dim
space as the encoder output.

A dataset on disk is a directory holding train.jsonl / test_in.jsonl /
test_cross.jsonl, each line one JSON object with fields exactly id, label,
domain, x, t_sem.  A single .jsonl path is accepted as a train-only split,
which is how externally extracted records enter the pipeline.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from gradsurgeon.errors import ValidationError
from gradsurgeon.numerics import Rng, Vec, as_vec


@dataclass
class FeatureRecord:
    id: str
    label: int
    domain: str
    x: Vec
    t_sem: Vec

    def __post_init__(self):
        if not isinstance(self.label, (int, np.integer)) or self.label not in (0, 1):
            raise ValidationError(f"record {self.id}: label must be 0 or 1, got {self.label!r}")
        self.label = int(self.label)
        self.x = as_vec(self.x, f"record {self.id}: x")
        self.t_sem = as_vec(self.t_sem, f"record {self.id}: t_sem")


@dataclass(frozen=True)
class SyntheticSpec:
    d_artifact: int = 4
    d_semantic: int = 16
    d_noise: int = 12
    corr_in: float = 0.6
    corr_out: float = 0.4
    n_train: int = 4096
    n_test_in: int = 2048
    n_test_cross: int = 2048
    artifact_margin: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("d_artifact", "d_semantic", "d_noise"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("corr_in", "corr_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        for name in ("n_train", "n_test_in", "n_test_cross"):
            if getattr(self, name) < 2:
                raise ValidationError(f"{name} must be >= 2 (need both labels), got {getattr(self, name)}")
        if self.artifact_margin < 0.0:
            raise ValidationError(f"artifact_margin must be >= 0, got {self.artifact_margin}")

    @property
    def input_dim(self) -> int:
        return self.d_artifact + self.d_semantic + self.d_noise


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    test_in_domain: list = field(default_factory=list)
    test_cross_domain: list = field(default_factory=list)

    def all_records(self) -> list:
        return self.train + self.test_in_domain + self.test_cross_domain


_T_SEM_JITTER = 0.1


def _gen_record(spec: SyntheticSpec, tag: str, i: int, corr: float, domain: str, rng: Rng) -> FeatureRecord:
    label = i % 2  # alternating labels keep every split balanced within 1
    r = rng.derive(f"{tag}/{i}")
    agrees = bool(r.uniform(1)[0] < corr)
    s = label if agrees else 1 - label
    art = r.gaussian(spec.d_artifact, spec.artifact_margin if label == 1 else -spec.artifact_margin, 1.0)
    sem = r.gaussian(spec.d_semantic, 1.0 if s == 1 else -1.0, 1.0)
    noise = r.gaussian(spec.d_noise, 0.0, 1.0)
    t_sem = sem + r.gaussian(spec.d_semantic, 0.0, _T_SEM_JITTER)
    return FeatureRecord(
        id=f"{tag}-{i:05d}",
        label=label,
        domain=domain,
        x=np.concatenate([art, sem, noise]),
        t_sem=t_sem,
    )


def generate_synthetic(spec: SyntheticSpec) -> DatasetSplit:
    """Deterministic by spec.seed; each record draws from its own derived stream."""
    rng = Rng(spec.seed)
    plan = (
        ("train", spec.n_train, spec.corr_in, "synthA"),
        ("in", spec.n_test_in, spec.corr_in, "synthA"),
        ("cross", spec.n_test_cross, spec.corr_out, "synthB"),
    )
    parts = [
        [_gen_record(spec, tag, i, corr, domain, rng) for i in range(n)]
        for tag, n, corr, domain in plan
    ]
    return DatasetSplit(train=parts[0], test_in_domain=parts[1], test_cross_domain=parts[2])


_FIELDS = ("id", "label", "domain", "x", "t_sem")
_SPLIT_FILES = (("train", "train.jsonl"), ("test_in_domain", "test_in.jsonl"), ("test_cross_domain", "test_cross.jsonl"))


def _record_to_obj(rec: FeatureRecord) -> dict:
    return {
        "id": rec.id,
        "label": rec.label,
        "domain": rec.domain,
        "x": rec.x.tolist(),
        "t_sem": rec.t_sem.tolist(),
    }


def _parse_line(line: str, where: str) -> FeatureRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{where}: malformed JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    missing = [k for k in _FIELDS if k not in obj]
    if missing:
        raise ValidationError(f"{where}: missing field(s) {', '.join(missing)}")
    unknown = [k for k in obj if k not in _FIELDS]
    if unknown:
        raise ValidationError(f"{where}: unknown field(s) {', '.join(unknown)}")
    if obj["label"] not in (0, 1):
        raise ValidationError(f"{where}: label must be 0 or 1, got {obj['label']!r}")
    try:
        return FeatureRecord(
            id=str(obj["id"]), label=obj["label"], domain=str(obj["domain"]),
            x=np.asarray(obj["x"], dtype=np.float64), t_sem=np.asarray(obj["t_sem"], dtype=np.float64),
        )
    except (ValidationError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _load_file(path, required: bool = True) -> list:
    if not os.path.exists(path):
        if required:
            raise ValidationError(f"{path}: file not found")
        return []
    records = []
    dims = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = _parse_line(line, f"{path}:{lineno}")
            d = (rec.x.shape[0], rec.t_sem.shape[0])
            if dims is None:
                dims = d
            elif d != dims:
                raise ValidationError(
                    f"{path}:{lineno}: dims {d} inconsistent with earlier records {dims}"
                )
            records.append(rec)
    if required and not records:
        raise ValidationError(f"{path}: no records")
    return records


def load_records(path) -> DatasetSplit:
    """Load a dataset directory, or a single .jsonl file as a train-only split."""
    if os.path.isdir(path):
        train = _load_file(os.path.join(path, "train.jsonl"), required=True)
        test_in = _load_file(os.path.join(path, "test_in.jsonl"), required=False)
        test_cross = _load_file(os.path.join(path, "test_cross.jsonl"), required=False)
        return DatasetSplit(train=train, test_in_domain=test_in, test_cross_domain=test_cross)
    return DatasetSplit(train=_load_file(path, required=True))


def write_records(split: DatasetSplit, path) -> None:
    """Write the three split files under directory `path` (created if needed)."""
    os.makedirs(path, exist_ok=True)
    for attr, fname in _SPLIT_FILES:
        with open(os.path.join(path, fname), "w", encoding="utf-8") as fh:
            for rec in getattr(split, attr):
                fh.write(json.dumps(_record_to_obj(rec)) + "\n")


def split_records(records: list, fractions, seed: int) -> list:
    """Seed-deterministic partition.

    Sizes follow a floor/remainder rule: partition k gets floor(n * f_k)
    records, and the n - sum(floor) leftover records go one each to the
    earliest partitions.  Every partition must end up with both labels.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0.0 for f in fractions):
        raise ValidationError("fractions must all be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(records)
    sizes = [math.floor(n * f) for f in fractions]
    for k in range(n - sum(sizes)):
        sizes[k] += 1
    order = Rng(seed).derive("split").permutation(n)
    parts = []
    start = 0
    for size in sizes:
        parts.append([records[j] for j in order[start : start + size]])
        start += size
    for k, part in enumerate(parts):
        labels = {rec.label for rec in part}
        if labels != {0, 1}:
            raise ValidationError(f"partition {k} is degenerate: labels present = {sorted(labels)}")
    return parts
