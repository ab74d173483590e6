"""Training loop applying per-sample gradient surgery through a VJP update.

Each step runs every sample through three branches (student image, frozen
text, frozen teacher), computes the three feature gradients analytically,
applies the surgery for the configured mode, and contracts the surgered
vector with the adapter Jacobian.  Parameter gradients are averaged over
the batch in sample order and applied by one optimizer update.

Only the adapter receives the surgered gradient.  The image and text heads
are updated with their ordinary loss gradients; the teacher encoder, the
student base, and the pretrained teacher head never change.  The update is
never obtained by differentiating a combined scalar loss: the projection
makes the final feature gradient non-integrable.

A NaN in any per-sample loss aborts the run immediately, naming the sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from gradsurgeon.datasets import DatasetSplit
from gradsurgeon.encoders import (
    LinearHead,
    MlpEncoder,
    ModelBundle,
    build_base_encoder,
    forward_student_cached,
    forward_teacher,
    forward_text,
    head_forward,
    init_bundle,
    vjp_adapter,
)
from gradsurgeon.errors import NumericalAbortError, ValidationError
from gradsurgeon.grad_core import (
    MODES,
    GradientTriple,
    align_loss,
    apply_surgery,
    bce_with_logits,
    bce_with_logits_grad,
)
from gradsurgeon.numerics import Rng, Vec, dot, l2_norm, matvec, matvec_t, sigmoid_vec, softplus_vec


@dataclass(frozen=True)
class SurgeryConfig:
    """One flat config object covering training, model, and benchmark knobs."""

    lam: float = 0.2
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 1
    eps_norm: float = 1e-12
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mode: str = "full"
    seed: int = 0
    rank: int = 6
    alpha: float = 6.0
    dropout_rate: float = 0.8
    pretrain_steps: int = 500
    pretrain_lr: float = 0.1
    data_mode: str = "synthetic"
    d_artifact: int = 4
    d_semantic: int = 16
    d_noise: int = 12
    corr_in: float = 0.6
    corr_out: float = 0.4
    n_train: int = 4096
    n_test_in: int = 2048
    n_test_cross: int = 2048
    artifact_margin: float = 1.0
    artifact_gain: float = 0.65
    semantic_gain: float = 1.0
    noise_gain: float = 0.05
    knn_k: int = 10

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.lr <= 0.0:
            raise ValidationError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.eps_norm <= 0.0:
            raise ValidationError(f"eps_norm must be > 0, got {self.eps_norm}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            )
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.data_mode not in ("synthetic", "ingest"):
            raise ValidationError(f"data_mode must be synthetic or ingest, got {self.data_mode!r}")
        if self.knn_k < 1:
            raise ValidationError(f"knn_k must be >= 1, got {self.knn_k}")


# Parameters the optimizer may touch; everything else in the bundle is frozen.
_TRAINABLE = ("adapter.A", "adapter.B", "h_img.w", "h_img.b", "h_text.w", "h_text.b")


@dataclass
class OptimizerState:
    step: int = 0
    moments: dict = field(default_factory=dict)

    def slot(self, name: str, like):
        if name not in self.moments:
            self.moments[name] = (np.zeros_like(like), np.zeros_like(like))
        return self.moments[name]


def adam_update(param, grad, state, step, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update; returns (new_param, new_state) with state = (m, v)."""
    b1, b2 = betas
    m, v = state
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), (m, v)


def sgd_update(param, grad, lr):
    return param - lr * grad


@dataclass
class StepMetrics:
    n: int
    loss_img: float
    loss_text: float
    loss_align: float
    correct: int
    skipped: int
    max_proj_residual: float
    update_norm: float


@dataclass
class EpochStats:
    epoch: int
    loss_img: float
    loss_text: float
    loss_align: float
    train_accuracy: float
    projection_skip_rate: float
    max_proj_residual: float
    update_norm: float

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss_img": self.loss_img,
            "loss_text": self.loss_text,
            "loss_align": self.loss_align,
            "train_accuracy": self.train_accuracy,
            "projection_skip_rate": self.projection_skip_rate,
            "max_proj_residual": self.max_proj_residual,
            "update_norm": self.update_norm,
        }


@dataclass
class RunHistory:
    epochs: list = field(default_factory=list)


def _teacher_feature_matrix(teacher, records) -> np.ndarray:
    return np.array([forward_teacher(teacher, rec.x) for rec in records])


def fit_logistic_head(feats: np.ndarray, labels: np.ndarray, steps: int, lr: float) -> LinearHead:
    """Full-batch gradient descent on BCE from a zero-initialized head.

    The objective is convex; at the default (500 steps, lr 0.1) the loss is
    monotone nonincreasing on the shipped benchmark scales.
    """
    feats = np.ascontiguousarray(np.asarray(feats, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    if len(set(labels.tolist())) < 2:
        raise ValidationError("logistic fit needs both labels present")
    n, d = feats.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(steps):
        z = matvec(feats, w) + b
        resid = sigmoid_vec(z) - labels
        w = w - lr * matvec_t(feats, resid) / n
        b = b - lr * float(np.sum(resid)) / n
    return LinearHead(w=w, b=b, frozen=True)


def logistic_loss(head: LinearHead, feats: np.ndarray, labels: np.ndarray) -> float:
    z = matvec(feats, head.w) + head.b
    return float(np.mean(softplus_vec(z) - np.asarray(labels, dtype=np.float64) * z))


def pretrain_teacher_head(teacher, train_records, steps: int = 500, lr: float = 0.1) -> LinearHead:
    """Fit the frozen teacher's classification head on its own features, then
    freeze it for the whole run."""
    if not train_records:
        raise ValidationError("pretraining needs a nonempty train set")
    feats = _teacher_feature_matrix(teacher, train_records)
    labels = np.array([rec.label for rec in train_records], dtype=np.float64)
    return fit_logistic_head(feats, labels, steps, lr)


def train_step(
    bundle: ModelBundle,
    batch,
    config: SurgeryConfig,
    opt_state: OptimizerState,
    rng: Rng,
) -> StepMetrics:
    """One optimizer update from one batch; per-sample surgery, mean aggregation."""
    if not batch:
        raise ValidationError("train_step needs a nonempty batch")
    if not bundle.h_teacher.frozen:
        raise ValidationError("teacher head must be pretrained and frozen before training")
    student, teacher = bundle.student, bundle.teacher
    h_img, h_text, h_teacher = bundle.h_img, bundle.h_text, bundle.h_teacher
    adapter = student.adapter

    sums = {
        "adapter.A": np.zeros_like(adapter.A),
        "adapter.B": np.zeros_like(adapter.B),
        "h_img.w": np.zeros_like(h_img.w),
        "h_img.b": 0.0,
        "h_text.w": np.zeros_like(h_text.w),
        "h_text.b": 0.0,
    }
    loss_img_sum = loss_text_sum = loss_align_sum = 0.0
    correct = 0
    skipped = 0
    max_resid = 0.0

    for rec in batch:
        f, cache = forward_student_cached(student, rec.x, train_mode=True, rng=rng)
        t = forward_text(rec)
        f_t = forward_teacher(teacher, rec.x)
        y = rec.label

        z_img = head_forward(h_img, f)
        z_text = head_forward(h_text, t)
        z_teacher = head_forward(h_teacher, f_t)
        loss_img = bce_with_logits(z_img, y)
        loss_text = bce_with_logits(z_text, y)
        loss_teacher = bce_with_logits(z_teacher, y)
        if math.isnan(loss_img) or math.isnan(loss_text) or math.isnan(loss_teacher):
            raise NumericalAbortError(f"NaN loss at sample {rec.id}", sample_id=rec.id)

        s_img = bce_with_logits_grad(z_img, y)
        s_text = bce_with_logits_grad(z_text, y)
        s_teacher = bce_with_logits_grad(z_teacher, y)
        triple = GradientTriple(
            g_task=s_img * h_img.w, g_text=s_text * h_text.w, g_img=s_teacher * h_teacher.w
        )
        out = apply_surgery(triple, config.mode, config.lam, config.eps_norm)

        grads = vjp_adapter(student, rec.x, out.g_final, cache)
        sums["adapter.A"] += grads.grad_A
        sums["adapter.B"] += grads.grad_B
        sums["h_img.w"] += s_img * f
        sums["h_img.b"] += s_img
        sums["h_text.w"] += s_text * t
        sums["h_text.b"] += s_text

        loss_img_sum += loss_img
        loss_text_sum += loss_text
        # lam-scaled contribution; + 0.0 folds the -0.0 from lam == 0 into +0.0
        # so a lam=0 run reports byte-identically to a mode with no injection.
        loss_align_sum += config.lam * align_loss(f, out.g_help) + 0.0
        correct += int((z_img > 0.0) == (y == 1))
        if out.projection_skipped:
            skipped += 1
        else:
            denom = l2_norm(triple.g_task) * l2_norm(out.g_harm)
            if denom > 0.0:
                max_resid = max(max_resid, abs(dot(out.g_tilde, out.g_harm)) / denom)

    n = len(batch)
    means = {k: v / n for k, v in sums.items()}

    opt_state.step += 1
    update_sq = 0.0
    betas = (config.adam_beta1, config.adam_beta2)
    for name in _TRAINABLE:
        owner, attr = name.split(".")
        target = {"adapter": adapter, "h_img": h_img, "h_text": h_text}[owner]
        old = getattr(target, attr)
        grad = means[name]
        if config.optimizer == "adam":
            new, mv = adam_update(
                old, grad, opt_state.slot(name, grad), opt_state.step,
                config.lr, betas, config.adam_eps,
            )
            opt_state.moments[name] = mv
        else:
            new = sgd_update(old, grad, config.lr)
        delta = new - old
        # diagnostic only: let absurd updates saturate to inf instead of warning
        with np.errstate(over="ignore"):
            update_sq += float(np.sum(delta * delta))
        setattr(target, attr, float(new) if np.isscalar(old) or np.ndim(old) == 0 else new)

    return StepMetrics(
        n=n,
        loss_img=loss_img_sum / n,
        loss_text=loss_text_sum / n,
        loss_align=loss_align_sum / n,
        correct=correct,
        skipped=skipped,
        max_proj_residual=max_resid,
        update_norm=math.sqrt(update_sq),
    )


def build_bundle_for(config: SurgeryConfig, train_records) -> ModelBundle:
    """Construct models sized to the data: the synthetic benchmark base in
    synthetic mode, an identity base when records already carry encoder
    features (x dim must then equal the semantic dim)."""
    if not train_records:
        raise ValidationError("dataset has no training records")
    x_dim = train_records[0].x.shape[0]
    t_dim = train_records[0].t_sem.shape[0]
    rng = Rng(config.seed)
    if config.data_mode == "ingest":
        if x_dim != t_dim:
            raise ValidationError(
                f"ingest mode requires x dim == t_sem dim, got {x_dim} vs {t_dim}"
            )
        base = MlpEncoder(weights=[np.eye(x_dim)], biases=[np.zeros(x_dim)])
    else:
        if config.d_artifact + config.d_semantic + config.d_noise != x_dim:
            raise ValidationError(
                f"config block dims sum to {config.d_artifact + config.d_semantic + config.d_noise}, "
                f"records have x dim {x_dim}"
            )
        if config.d_semantic != t_dim:
            raise ValidationError(
                f"config d_semantic {config.d_semantic} != records' t_sem dim {t_dim}"
            )
        base = build_base_encoder(
            config.d_artifact, config.d_semantic, config.d_noise, rng.derive("base"),
            artifact_gain=config.artifact_gain,
            semantic_gain=config.semantic_gain,
            noise_gain=config.noise_gain,
        )
    return init_bundle(base, config.rank, config.alpha, config.dropout_rate, rng.derive("adapter"))


def train(config: SurgeryConfig, dataset: DatasetSplit) -> tuple[ModelBundle, RunHistory]:
    """Full run: build models, pretrain and freeze the teacher head, iterate
    seed-shuffled batches for the configured epochs."""
    records = dataset.train
    bundle = build_bundle_for(config, records)
    bundle.h_teacher = pretrain_teacher_head(
        bundle.teacher, records, config.pretrain_steps, config.pretrain_lr
    )
    rng = Rng(config.seed)
    opt_state = OptimizerState()
    history = RunHistory()
    n = len(records)
    for epoch in range(config.epochs):
        order = rng.derive(f"shuffle/{epoch}").permutation(n)
        drop_rng = rng.derive(f"dropout/{epoch}")
        totals = dict(loss_img=0.0, loss_text=0.0, loss_align=0.0, correct=0, skipped=0)
        max_resid = 0.0
        update_sq = 0.0
        seen = 0
        for start in range(0, n, config.batch_size):
            batch = [records[j] for j in order[start : start + config.batch_size]]
            sm = train_step(bundle, batch, config, opt_state, drop_rng)
            seen += sm.n
            totals["loss_img"] += sm.loss_img * sm.n
            totals["loss_text"] += sm.loss_text * sm.n
            totals["loss_align"] += sm.loss_align * sm.n
            totals["correct"] += sm.correct
            totals["skipped"] += sm.skipped
            max_resid = max(max_resid, sm.max_proj_residual)
            update_sq += sm.update_norm**2
        history.epochs.append(
            EpochStats(
                epoch=epoch,
                loss_img=totals["loss_img"] / seen,
                loss_text=totals["loss_text"] / seen,
                loss_align=totals["loss_align"] / seen,
                train_accuracy=totals["correct"] / seen,
                projection_skip_rate=totals["skipped"] / seen,
                max_proj_residual=max_resid,
                update_norm=math.sqrt(update_sq),
            )
        )
    return bundle, history


def config_from_dict(values: dict) -> SurgeryConfig:
    """Build a config from string-keyed values, rejecting unknown keys."""
    known = set(SurgeryConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return SurgeryConfig(**values)


def with_overrides(config: SurgeryConfig, **overrides) -> SurgeryConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
