"""Dense vector/matrix primitives, stable scalar functions, seeded randomness.

Vectors and matrices are plain float64 numpy arrays (1-D / 2-D, C-contiguous);
``as_vec`` / ``as_mat`` are the validating constructors.  All reductions run
through the kernel backend (compiled or pure Python, identical left-to-right
accumulation), so repeated calls with equal inputs are bit-identical.

Randomness is a counter-based stream: draw ``i`` under seed ``s`` is
``mix64((s + (i + 1) * GOLDEN) mod 2**64)`` with the SplitMix64 finalizer as
``mix64``, so the raw 64-bit sequence depends only on (seed, draw index) and
reproduces exactly on any platform.  The float mappings on top of it
(uniform via the high 53 bits, normals via Box-Muller) add only libm calls.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from gradsurgeon import backend
from gradsurgeon.errors import DimensionMismatchError, ValidationError

Vec = np.ndarray
Mat = np.ndarray

_U64 = np.uint64
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0**-53


def as_vec(values, name: str = "vector") -> Vec:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected 1-D data, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name}: dimension must be positive")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: contains non-finite entries")
    return arr


def as_mat(values, name: str = "matrix") -> Mat:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected 2-D data, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name}: both dimensions must be positive")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: contains non-finite entries")
    return arr


def dot(a: Vec, b: Vec) -> float:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(a.shape[0], b.shape[0], op="dot")
    return backend.dot(a, b)


def l2_norm(a: Vec) -> float:
    return backend.l2_norm(a)


def matvec(m: Mat, x: Vec) -> Vec:
    if m.shape[1] != x.shape[0]:
        raise DimensionMismatchError(m.shape[1], x.shape[0], op="matvec")
    return backend.matvec(m, x)


def matvec_t(m: Mat, x: Vec) -> Vec:
    if m.shape[0] != x.shape[0]:
        raise DimensionMismatchError(m.shape[0], x.shape[0], op="matvec_t")
    return backend.matvec_t(m, x)


def vsum(a: Vec) -> float:
    return backend.vsum(a)


def stable_sigmoid(z: float) -> float:
    """Logistic function, overflow-free for |z| up to ~1e308 (branch on sign)."""
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def softplus(z: float) -> float:
    """log(1 + e^z) computed as max(z, 0) + log1p(e^-|z|)."""
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def sigmoid_vec(z: Vec) -> Vec:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus_vec(z: Vec) -> Vec:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 (all arithmetic mod 2^64)."""
    x = x.astype(_U64, copy=True)
    x ^= x >> _U64(30)
    x *= _U64(0xBF58476D1CE4E5B9)
    x ^= x >> _U64(27)
    x *= _U64(0x94D049BB133111EB)
    x ^= x >> _U64(31)
    return x


class Rng:
    """Counter-based random stream; one instance per logical stream.

    Instances are cheap and not thread-safe; derive independent streams with
    :meth:`derive` instead of sharing one.  The draw counter advances by the
    number of raw 64-bit words consumed, so sequences are independent of how
    draws are batched.
    """

    __slots__ = ("seed", "_counter")

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=_U64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(_U64(self.seed) + idx * _U64(_GOLDEN))

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) from the high 53 bits of the raw stream."""
        return (self._raw(n) >> _U64(11)).astype(np.float64) * _INV_2_53

    def gaussian(self, dim: int, mean: float = 0.0, std: float = 1.0) -> Vec:
        """dim i.i.d. normal draws via Box-Muller (2 raw words per draw)."""
        if dim < 1:
            raise ValidationError(f"gaussian: dim must be >= 1, got {dim}")
        if std < 0.0:
            raise ValidationError(f"gaussian: std must be >= 0, got {std}")
        raw = self._raw(2 * dim)
        # u1 in (0, 1] so log(u1) is finite; u2 in [0, 1).
        u1 = ((raw[0::2] >> _U64(11)) + _U64(1)).astype(np.float64) * _INV_2_53
        u2 = (raw[1::2] >> _U64(11)).astype(np.float64) * _INV_2_53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
        return mean + std * z

    def bernoulli(self, dim: int, p_true: float) -> np.ndarray:
        """Boolean vector, True with probability p_true (one raw word each)."""
        return self.uniform(dim) < p_true

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n); swap index j = floor(u * (i + 1))."""
        perm = np.arange(n, dtype=np.int64)
        if n <= 1:
            return perm
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derive(self, label: str | int) -> "Rng":
        """Independent child stream: seed = first 8 bytes of sha256(seed/label)."""
        digest = hashlib.sha256(f"{self.seed}/{label}".encode("utf-8")).digest()
        return Rng(int.from_bytes(digest[:8], "little"))


def gaussian_vec(rng: Rng, dim: int, mean: float, std: float) -> Vec:
    return rng.gaussian(dim, mean, std)
