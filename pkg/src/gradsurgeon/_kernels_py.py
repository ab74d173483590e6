"""Pure-Python reference kernels.

Fallback for environments without the compiled extension.  Accumulation order
is the contract: every reduction runs left to right over the input, exactly
like ``_kernels.pyx``, so the two backends agree bit for bit.  Arrays are
converted to Python floats up front; float and C double arithmetic follow the
same IEEE-754 rules, only slower.
"""

import math

import numpy as np


def dot(a, b):
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        acc = acc + x * y
    return acc


def vsum(a):
    acc = 0.0
    for x in a.tolist():
        acc = acc + x
    return acc


def l2_norm(a):
    acc = 0.0
    for x in a.tolist():
        acc = acc + x * x
    return math.sqrt(acc)


def matvec(m, x):
    xs = x.tolist()
    out = np.empty(m.shape[0], dtype=np.float64)
    for i, row in enumerate(m.tolist()):
        acc = 0.0
        for mij, xj in zip(row, xs):
            acc = acc + mij * xj
        out[i] = acc
    return out


def matvec_t(m, x):
    xs = x.tolist()
    out = [0.0] * m.shape[1]
    for i, row in enumerate(m.tolist()):
        xi = xs[i]
        for j, mij in enumerate(row):
            out[j] = out[j] + mij * xi
    return np.asarray(out, dtype=np.float64)
