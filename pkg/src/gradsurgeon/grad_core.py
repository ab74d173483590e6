"""Half-space gradient surgery on per-sample feature gradients.

Three branch gradients live in the shared d-dim feature space: the task
gradient from the student image branch, the text-branch gradient from the
frozen semantic feature, and the teacher-branch gradient from the frozen
reference encoder.  The surgery splits the latter two into coordinate
half-spaces (positive part = coordinates where a positive feature
perturbation raises that branch loss), removes the task gradient's
component along the normalized harmful direction, and injects a scaled
beneficial direction:

    g_harm  = positive_part(g_text)
    g_help  = negative_part(g_img)
    g_tilde = g_task - (g_task . ghat) ghat,   ghat = g_harm / ||g_harm||
    g_final = g_tilde + lambda * g_help

The projection is skipped (identity) when ||g_harm|| <= eps, because the
orthogonality constraint is vacuous with an undefined unit direction.
g_final is generally not the gradient of any scalar loss; consumers must
apply it through a vector-Jacobian product, not by differentiating a
modified objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from gradsurgeon.errors import DimensionMismatchError, ValidationError
from gradsurgeon.numerics import Vec, as_vec, dot, l2_norm, softplus, stable_sigmoid

if TYPE_CHECKING:
    from gradsurgeon.encoders import LinearHead

MODES = ("baseline", "suppress_only", "align_only", "full", "full_text_grad", "full_img_grad")

DEFAULT_EPS_NORM = 1e-12


@dataclass(frozen=True)
class GradientTriple:
    """Per-sample feature gradients of the three branches, all dim d."""

    g_task: Vec
    g_text: Vec
    g_img: Vec

    def __post_init__(self):
        object.__setattr__(self, "g_task", as_vec(self.g_task, "g_task"))
        object.__setattr__(self, "g_text", as_vec(self.g_text, "g_text"))
        object.__setattr__(self, "g_img", as_vec(self.g_img, "g_img"))
        d = self.g_task.shape[0]
        if self.g_text.shape[0] != d:
            raise DimensionMismatchError(d, self.g_text.shape[0], op="GradientTriple(g_text)")
        if self.g_img.shape[0] != d:
            raise DimensionMismatchError(d, self.g_img.shape[0], op="GradientTriple(g_img)")

    @property
    def dim(self) -> int:
        return self.g_task.shape[0]


@dataclass(frozen=True)
class HalfSpaceDecomposition:
    """Split of a gradient into its positive and negative coordinate parts.

    positive + negative reconstructs the original exactly and the two parts
    have disjoint support (elementwise product zero).
    """

    positive: Vec
    negative: Vec

    @classmethod
    def of(cls, g: Vec) -> "HalfSpaceDecomposition":
        return cls(positive=positive_part(g), negative=negative_part(g))


@dataclass(frozen=True)
class SurgeryOutput:
    """Result of one per-sample surgery application."""

    g_tilde: Vec
    g_harm: Vec
    g_help: Vec
    g_final: Vec
    projection_skipped: bool


def bce_with_logits(logit: float, label: int) -> float:
    """Binary cross-entropy from the logit: softplus(z) - y*z, overflow-free."""
    y = _check_label(label)
    return softplus(logit) - y * logit


def bce_with_logits_grad(logit: float, label: int) -> float:
    """d/dz of bce_with_logits: sigma(z) - y, always in (-1, 1)."""
    y = _check_label(label)
    return stable_sigmoid(logit) - y


def _check_label(label) -> float:
    if isinstance(label, bool) or label in (0, 1):
        return float(label)
    raise ValidationError(f"label must be 0 or 1, got {label!r}")


def feature_grad(head: "LinearHead", f: Vec, label: int) -> Vec:
    """Gradient of the BCE branch loss w.r.t. the feature: (sigma(w.f+b) - y) * w."""
    if head.w.shape[0] != f.shape[0]:
        raise DimensionMismatchError(head.w.shape[0], f.shape[0], op="feature_grad")
    scale = bce_with_logits_grad(dot(head.w, f) + head.b, label)
    return scale * head.w


def positive_part(g: Vec) -> Vec:
    """Elementwise max(g_j, 0): coordinates where increasing the feature raises the loss."""
    return np.maximum(g, 0.0)


def negative_part(g: Vec) -> Vec:
    """Elementwise min(g_j, 0): coordinates where increasing the feature lowers the loss."""
    return np.minimum(g, 0.0)


def harmful_direction(g_text: Vec) -> Vec:
    """The suppressed direction: positive part of the text-branch gradient."""
    return positive_part(g_text)


def beneficial_direction(g_img: Vec) -> Vec:
    """The injected direction: negative part of the teacher-branch gradient."""
    return negative_part(g_img)


def orthogonal_suppress(g_task: Vec, g_harm: Vec, eps: float = DEFAULT_EPS_NORM) -> tuple[Vec, bool]:
    """Project g_task onto the orthogonal complement of g_harm's direction.

    Returns (g_tilde, skipped).  The projection g_task - (g_task . ghat) ghat
    is the closest vector to g_task satisfying <g_tilde, g_harm> = 0; the
    d x d projector is never materialized.  When ||g_harm|| <= eps the
    constraint is vacuous and g_task passes through unchanged (skipped=True).
    """
    if g_task.shape[0] != g_harm.shape[0]:
        raise DimensionMismatchError(g_task.shape[0], g_harm.shape[0], op="orthogonal_suppress")
    if eps <= 0.0:
        raise ValidationError(f"eps must be > 0, got {eps}")
    norm = l2_norm(g_harm)
    if norm <= eps:
        return g_task.copy(), True
    ghat = g_harm / norm
    coef = dot(g_task, ghat)
    return g_task - coef * ghat, False


def align_loss(f: Vec, g_help: Vec) -> float:
    """Linear alignment term <f, g_help>; g_help is a constant, so the
    gradient w.r.t. f is exactly g_help."""
    if f.shape[0] != g_help.shape[0]:
        raise DimensionMismatchError(f.shape[0], g_help.shape[0], op="align_loss")
    return dot(f, g_help)


def assemble_final_grad(g_tilde: Vec, g_help: Vec, lam: float) -> Vec:
    """Blend the projected task gradient with the beneficial direction."""
    if g_tilde.shape[0] != g_help.shape[0]:
        raise DimensionMismatchError(g_tilde.shape[0], g_help.shape[0], op="assemble_final_grad")
    if lam < 0.0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    return g_tilde + lam * g_help


def apply_surgery(
    triple: GradientTriple,
    mode: str = "full",
    lam: float = 0.2,
    eps: float = DEFAULT_EPS_NORM,
) -> SurgeryOutput:
    """Run the full per-sample pipeline under one of the six training modes.

    baseline        g_final = g_task (no projection, no injection)
    suppress_only   projection only, lambda forced to 0
    align_only      no projection, lambda * g_help injected
    full            projection + injection (half-space directions)
    full_text_grad  as full but g_harm = g_text whole (no positive part)
    full_img_grad   as full but g_help = g_img whole (no negative part)
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    zero = np.zeros_like(triple.g_task)

    if mode == "baseline":
        return SurgeryOutput(
            g_tilde=triple.g_task.copy(),
            g_harm=zero,
            g_help=zero.copy(),
            g_final=triple.g_task.copy(),
            projection_skipped=True,
        )

    if mode == "full_text_grad":
        g_harm = triple.g_text.copy()
    elif mode == "align_only":
        g_harm = zero
    else:
        g_harm = harmful_direction(triple.g_text)

    if mode == "suppress_only":
        g_help = np.zeros_like(zero)
        lam_eff = 0.0
    elif mode == "full_img_grad":
        g_help = triple.g_img.copy()
        lam_eff = lam
    else:
        g_help = beneficial_direction(triple.g_img)
        lam_eff = lam

    if mode == "align_only":
        g_tilde, skipped = triple.g_task.copy(), True
    else:
        g_tilde, skipped = orthogonal_suppress(triple.g_task, g_harm, eps)

    g_final = assemble_final_grad(g_tilde, g_help, lam_eff)
    return SurgeryOutput(
        g_tilde=g_tilde, g_harm=g_harm, g_help=g_help, g_final=g_final,
        projection_skipped=skipped,
    )


def directional_probe(
    loss: Callable[[Vec], float], u: Vec, j: int, epsilon: float | None = None
) -> int:
    """Sign of the loss change under a small positive bump of coordinate j.

    A positive sign marks coordinate j as harmful at u (loss rises when the
    feature grows).  Near-stationary coordinates can return the sign of the
    second-order term; callers should only trust well-conditioned ones.
    """
    if not 0 <= j < u.shape[0]:
        raise ValidationError(f"coordinate {j} out of range for dim {u.shape[0]}")
    if epsilon is None:
        epsilon = 1e-4 * (1.0 + l2_norm(u))
    if epsilon <= 0.0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    bumped = u.copy()
    bumped[j] += epsilon
    delta = loss(bumped) - loss(u)
    if delta > 0.0:
        return 1
    if delta < 0.0:
        return -1
    return 0
