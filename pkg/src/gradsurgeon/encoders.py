"""Student/teacher encoders, linear heads, and the trainable low-rank adapter.

The student is a frozen base MLP plus a trainable low-rank residual on the
base feature: f = h + (alpha/r) * B @ A @ drop(h), h = base(x).  The teacher
is a deep copy of the base taken before training, so student == teacher at
initialization (B == 0) and forever on the base weights.  Heads are plain
logistic units on top of features.

Because the surgered feature gradient is not the gradient of any scalar,
parameter gradients come from an explicit vector-Jacobian product
(vjp_adapter) rather than backprop through a loss; the dropout mask from
the paired forward pass must be reused there, so training-mode forwards go
through forward_student_cached.

Checkpoints are a line-oriented text format (shapes in decimal, values as
C99 hex floats) so write -> read round-trips are bit-exact.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from gradsurgeon.errors import DimensionMismatchError, ValidationError
from gradsurgeon.grad_core import bce_with_logits_grad
from gradsurgeon.numerics import Mat, Rng, Vec, as_mat, as_vec, dot, matvec, matvec_t


@dataclass
class LinearHead:
    """Logistic unit: logit = w . f + b.  frozen marks heads the trainer must not touch."""

    w: Vec
    b: float
    frozen: bool = False

    def __post_init__(self):
        self.w = as_vec(self.w, "head.w")
        self.b = float(self.b)
        if not np.isfinite(self.b):
            raise ValidationError("head.b must be finite")

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, dim: int, frozen: bool = False) -> "LinearHead":
        return cls(w=np.zeros(dim), b=0.0, frozen=frozen)


@dataclass
class MlpEncoder:
    """Dense MLP with tanh between layers and a linear final layer.

    A single-layer encoder is therefore purely linear, so an identity weight
    matrix gives an identity map.
    """

    weights: list
    biases: list

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValidationError("encoder needs matching non-empty weight/bias lists")
        self.weights = [as_mat(w, f"layer {i} weight") for i, w in enumerate(self.weights)]
        self.biases = [as_vec(b, f"layer {i} bias") for i, b in enumerate(self.biases)]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise DimensionMismatchError(w.shape[0], b.shape[0], op=f"layer {i} bias")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionMismatchError(
                    self.weights[i - 1].shape[0], w.shape[1], op=f"layer {i} input"
                )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def forward(self, x: Vec) -> Vec:
        if x.shape[0] != self.input_dim:
            raise DimensionMismatchError(self.input_dim, x.shape[0], op="encoder forward")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = matvec(w, h) + b
            if i != last:
                h = np.tanh(h)
        return h


@dataclass
class LowRankAdapter:
    """Trainable residual of rank r: feature += (alpha/r) * B @ A @ drop(h)."""

    A: Mat
    B: Mat
    rank: int
    alpha: float
    dropout_rate: float

    def __post_init__(self):
        if self.rank < 1:
            raise ValidationError(f"adapter rank must be >= 1, got {self.rank}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        self.A = as_mat(self.A, "adapter.A")
        self.B = as_mat(self.B, "adapter.B")
        if self.A.shape[0] != self.rank or self.B.shape[1] != self.rank:
            raise ValidationError(
                f"adapter shapes {self.A.shape}/{self.B.shape} inconsistent with rank {self.rank}"
            )
        if self.A.shape[1] != self.B.shape[0]:
            raise DimensionMismatchError(self.A.shape[1], self.B.shape[0], op="adapter A/B")

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @classmethod
    def init(cls, dim: int, rank: int, alpha: float, dropout_rate: float, rng: Rng) -> "LowRankAdapter":
        # A ~ N(0, 1/dim), B = 0: the residual vanishes at init, so the
        # student starts bit-identical to the teacher.
        a = rng.gaussian(rank * dim, 0.0, 1.0 / np.sqrt(dim)).reshape(rank, dim)
        return cls(A=a, B=np.zeros((dim, rank)), rank=rank, alpha=alpha, dropout_rate=dropout_rate)


@dataclass
class StudentEncoder:
    base: MlpEncoder
    adapter: LowRankAdapter

    def __post_init__(self):
        if self.base.output_dim != self.adapter.dim:
            raise DimensionMismatchError(self.base.output_dim, self.adapter.dim, op="student adapter")


@dataclass
class TeacherEncoder:
    base: MlpEncoder

    @classmethod
    def from_student(cls, student: StudentEncoder) -> "TeacherEncoder":
        return cls(base=copy.deepcopy(student.base))


@dataclass
class AdapterCache:
    """Forward-pass intermediates vjp_adapter needs: base feature and the
    (possibly dropout-masked, inverted-scaled) adapter input actually used."""

    h: Vec
    h_drop: Vec


@dataclass
class AdapterGrads:
    grad_A: Mat
    grad_B: Mat

    def scaled(self, c: float) -> "AdapterGrads":
        return AdapterGrads(grad_A=c * self.grad_A, grad_B=c * self.grad_B)


def forward_teacher(enc: TeacherEncoder, x: Vec) -> Vec:
    return enc.base.forward(x)


def forward_student_cached(
    enc: StudentEncoder, x: Vec, train_mode: bool = False, rng: Rng | None = None
) -> tuple[Vec, AdapterCache]:
    """Student forward returning the cache required by vjp_adapter.

    In train mode with dropout_rate > 0, one Bernoulli mask is drawn from rng
    and the kept coordinates are scaled by 1/(1-p) (inverted dropout); eval
    mode is deterministic and mask-free.
    """
    adapter = enc.adapter
    h = enc.base.forward(x)
    p = adapter.dropout_rate
    if train_mode and p > 0.0:
        if rng is None:
            raise ValidationError("train-mode forward with dropout needs an rng")
        keep = rng.bernoulli(h.shape[0], 1.0 - p)
        h_drop = np.where(keep, h / (1.0 - p), 0.0)
    else:
        h_drop = h
    f = h + adapter.scale * matvec(adapter.B, matvec(adapter.A, h_drop))
    return f, AdapterCache(h=h, h_drop=h_drop)


def forward_student(
    enc: StudentEncoder, x: Vec, train_mode: bool = False, rng: Rng | None = None
) -> Vec:
    return forward_student_cached(enc, x, train_mode, rng)[0]


def forward_text(record) -> Vec:
    """Frozen semantic branch: return the stored semantic feature unchanged."""
    t = getattr(record, "t_sem", None) if not isinstance(record, np.ndarray) else record
    if t is None:
        raise ValidationError("record carries no semantic feature (t_sem)")
    return as_vec(t, "t_sem")


def head_forward(head: LinearHead, f: Vec) -> float:
    if head.dim != f.shape[0]:
        raise DimensionMismatchError(head.dim, f.shape[0], op="head_forward")
    return dot(head.w, f) + head.b


def head_grad(head: LinearHead, f: Vec, label: int) -> tuple[Vec, float]:
    """Loss gradient w.r.t. (w, b): ((sigma(logit) - y) * f, sigma(logit) - y)."""
    scale = bce_with_logits_grad(head_forward(head, f), label)
    return scale * f, scale


def vjp_adapter(enc: StudentEncoder, x: Vec, v: Vec, cache: AdapterCache | None) -> AdapterGrads:
    """d<f(x; A, B), v>/d(A, B) for the cached forward pass.

    grad_B = (alpha/r) * outer(v, A @ h_drop); grad_A = (alpha/r) * outer(B^T v, h_drop).
    The frozen base receives no gradient.  The cache (hence the exact dropout
    mask) from the paired forward is mandatory.
    """
    if cache is None:
        raise ValidationError("vjp_adapter needs the cache from the paired forward pass")
    adapter = enc.adapter
    if v.shape[0] != adapter.dim:
        raise DimensionMismatchError(adapter.dim, v.shape[0], op="vjp_adapter")
    s = adapter.scale
    z = matvec(adapter.A, cache.h_drop)
    bt_v = matvec_t(adapter.B, v)
    return AdapterGrads(grad_A=s * np.outer(bt_v, cache.h_drop), grad_B=s * np.outer(v, z))


def build_base_encoder(
    d_artifact: int,
    d_semantic: int,
    d_noise: int,
    rng: Rng,
    artifact_gain: float = 0.65,
    semantic_gain: float = 1.0,
    noise_gain: float = 0.05,
) -> MlpEncoder:
    """Frozen base for the synthetic benchmark: one linear layer mapping the
    concatenated input onto the d_semantic-dim shared feature space.

    Semantic coordinates pass through at semantic_gain on matching indices
    (the analogue of image and text features sharing an embedding space).
    The artifact block is mixed only into the first min(d_artifact,
    d_semantic) carrier coordinates, by dense N(0, artifact_gain^2) weights;
    those carriers keep a quarter of the semantic gain. The noise block is
    mixed everywhere by zero-mean Gaussian columns. Concentrating the
    artifact on a few semantically attenuated coordinates keeps it readable
    for a long full-batch probe while a short minibatch run mostly latches
    onto the dominant semantic passthrough instead.
    """
    d_in = d_artifact + d_semantic + d_noise
    carriers = min(d_artifact, d_semantic)
    w = np.zeros((d_semantic, d_in))
    w[:carriers, :d_artifact] = rng.gaussian(carriers * d_artifact, 0.0, artifact_gain).reshape(
        carriers, d_artifact
    )
    diag_gain = np.full(d_semantic, semantic_gain)
    diag_gain[:carriers] *= 0.25
    w[:, d_artifact : d_artifact + d_semantic] += np.diag(diag_gain)
    w[:, d_artifact + d_semantic :] = rng.gaussian(d_semantic * d_noise, 0.0, noise_gain).reshape(
        d_semantic, d_noise
    )
    return MlpEncoder(weights=[w], biases=[np.zeros(d_semantic)])


@dataclass
class ModelBundle:
    """Everything training touches or must keep frozen, in one place."""

    student: StudentEncoder
    teacher: TeacherEncoder
    h_img: LinearHead
    h_text: LinearHead
    h_teacher: LinearHead

    @property
    def dim(self) -> int:
        return self.student.base.output_dim


def init_bundle(base: MlpEncoder, rank: int, alpha: float, dropout_rate: float, rng: Rng) -> ModelBundle:
    """Fresh bundle: teacher copies the base before any training; trainable
    heads start at zero; the teacher head starts at zero and is pretrained
    then frozen by the trainer."""
    d = base.output_dim
    student = StudentEncoder(base=base, adapter=LowRankAdapter.init(d, rank, alpha, dropout_rate, rng))
    teacher = TeacherEncoder.from_student(student)
    return ModelBundle(
        student=student,
        teacher=teacher,
        h_img=LinearHead.zeros(d),
        h_text=LinearHead.zeros(d),
        h_teacher=LinearHead.zeros(d, frozen=True),
    )


_CKPT_MAGIC = "gradsurgeon-checkpoint v1"


def _write_tensor(lines: list, name: str, arr: np.ndarray):
    arr2 = np.atleast_2d(arr)
    lines.append(f"tensor {name} {arr.ndim} {' '.join(str(s) for s in arr.shape)}")
    for row in arr2:
        lines.append(" ".join(float(v).hex() for v in row))


def _write_scalar(lines: list, name: str, value: float):
    lines.append(f"scalar {name} {float(value).hex()}")


def save_bundle(bundle: ModelBundle, path, config_echo: dict | None = None) -> None:
    """Serialize the full bundle as text; values are hex floats, so loading
    reproduces every parameter bit-exactly."""
    lines = [_CKPT_MAGIC]
    echo = config_echo or {}
    lines.append(f"config {len(echo)}")
    for k in sorted(echo):
        lines.append(f"{k} = {echo[k]}")
    for tag, enc in (("base", bundle.student.base), ("teacher", bundle.teacher.base)):
        lines.append(f"section {tag} {len(enc.weights)}")
        for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
            _write_tensor(lines, f"W{i}", w)
            _write_tensor(lines, f"b{i}", b)
    ad = bundle.student.adapter
    lines.append("section adapter")
    lines.append(f"rank {ad.rank}")
    _write_scalar(lines, "alpha", ad.alpha)
    _write_scalar(lines, "dropout_rate", ad.dropout_rate)
    _write_tensor(lines, "A", ad.A)
    _write_tensor(lines, "B", ad.B)
    for tag, head in (("h_img", bundle.h_img), ("h_text", bundle.h_text), ("h_teacher", bundle.h_teacher)):
        lines.append(f"section head {tag} {int(head.frozen)}")
        _write_tensor(lines, "w", head.w)
        _write_scalar(lines, "b", head.b)
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _CkptReader:
    def __init__(self, path):
        with open(path, "r", encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ValidationError("checkpoint truncated")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, prefix: str) -> list:
        line = self.next()
        parts = line.split()
        if not line.startswith(prefix):
            raise ValidationError(f"checkpoint line {self.pos}: expected '{prefix}', got '{line}'")
        return parts

    def tensor(self, name: str) -> np.ndarray:
        parts = self.expect("tensor")
        if parts[1] != name:
            raise ValidationError(f"checkpoint line {self.pos}: expected tensor {name}, got {parts[1]}")
        ndim = int(parts[2])
        shape = tuple(int(s) for s in parts[3 : 3 + ndim])
        rows = shape[0] if ndim == 2 else 1
        data = [[float.fromhex(tok) for tok in self.next().split()] for _ in range(rows)]
        arr = np.array(data, dtype=np.float64)
        return arr.reshape(shape)

    def scalar(self, name: str) -> float:
        parts = self.expect("scalar")
        if parts[1] != name:
            raise ValidationError(f"checkpoint line {self.pos}: expected scalar {name}, got {parts[1]}")
        return float.fromhex(parts[2])


def load_bundle(path) -> tuple[ModelBundle, dict]:
    reader = _CkptReader(path)
    if reader.next() != _CKPT_MAGIC:
        raise ValidationError("not a gradsurgeon checkpoint")
    n_cfg = int(reader.expect("config")[1])
    echo = {}
    for _ in range(n_cfg):
        key, _, value = reader.next().partition(" = ")
        echo[key] = value
    encs = {}
    for tag in ("base", "teacher"):
        parts = reader.expect("section")
        if parts[1] != tag:
            raise ValidationError(f"checkpoint: expected section {tag}")
        n_layers = int(parts[2])
        ws, bs = [], []
        for i in range(n_layers):
            ws.append(reader.tensor(f"W{i}"))
            bs.append(reader.tensor(f"b{i}"))
        encs[tag] = MlpEncoder(weights=ws, biases=bs)
    reader.expect("section adapter")
    rank = int(reader.expect("rank")[1])
    alpha = reader.scalar("alpha")
    dropout_rate = reader.scalar("dropout_rate")
    a = reader.tensor("A")
    b_mat = reader.tensor("B")
    adapter = LowRankAdapter(A=a, B=b_mat, rank=rank, alpha=alpha, dropout_rate=dropout_rate)
    heads = {}
    for tag in ("h_img", "h_text", "h_teacher"):
        parts = reader.expect("section")
        if parts[1] != "head" or parts[2] != tag:
            raise ValidationError(f"checkpoint: expected head {tag}")
        frozen = bool(int(parts[3]))
        w = reader.tensor("w")
        b = reader.scalar("b")
        heads[tag] = LinearHead(w=w, b=b, frozen=frozen)
    reader.expect("end")
    bundle = ModelBundle(
        student=StudentEncoder(base=encs["base"], adapter=adapter),
        teacher=TeacherEncoder(base=encs["teacher"]),
        h_img=heads["h_img"],
        h_text=heads["h_text"],
        h_teacher=heads["h_teacher"],
    )
    return bundle, echo
