"""Timing comparison of the compiled and pure-Python kernel backends.

Both implement identical left-to-right reductions, so before timing anything
the script asserts bit-for-bit agreement on every probed size.  Timings are
best-of-N wall clock per call; sizes bracket the training hot path (feature
dims around 32, adapter mats a few hundred entries) plus one larger point to
show scaling.

Run:  python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from gradsurgeon import _kernels_py

try:
    from gradsurgeon import _kernels
except ImportError:
    _kernels = None

from gradsurgeon.numerics import Rng

VEC_SIZES = (32, 256, 4096)
MAT_SIZES = ((32, 32), (6, 16), (256, 512))


def best_of(fn, args, repeats, budget=0.05):
    # calibrate an inner loop so one measurement is ~budget seconds
    n_inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n_inner):
            fn(*args)
        elapsed = time.perf_counter() - t0
        if elapsed > budget / 4 or n_inner >= 1 << 20:
            break
        n_inner *= 4
    best = elapsed / n_inner
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(n_inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / n_inner)
    return best


def fmt(seconds):
    if seconds < 1e-6:
        return f"{seconds * 1e9:8.1f} ns"
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    if _kernels is None:
        print("compiled extension not built; timing the pure-Python backend only")

    rng = Rng(0)
    cases = []
    for n in VEC_SIZES:
        a = rng.derive(f"a{n}").gaussian(n, 0.0, 1.0)
        b = rng.derive(f"b{n}").gaussian(n, 0.0, 1.0)
        cases.append((f"dot[{n}]", "dot", (a, b)))
        cases.append((f"vsum[{n}]", "vsum", (a,)))
        cases.append((f"l2_norm[{n}]", "l2_norm", (a,)))
    for rows, cols in MAT_SIZES:
        m = np.ascontiguousarray(
            rng.derive(f"m{rows}x{cols}").gaussian(rows * cols, 0.0, 1.0).reshape(rows, cols)
        )
        x = rng.derive(f"x{cols}").gaussian(cols, 0.0, 1.0)
        xt = rng.derive(f"xt{rows}").gaussian(rows, 0.0, 1.0)
        cases.append((f"matvec[{rows}x{cols}]", "matvec", (m, x)))
        cases.append((f"matvec_t[{rows}x{cols}]", "matvec_t", (m, xt)))

    for label, name, call_args in cases:
        if _kernels is None:
            continue
        got_c = getattr(_kernels, name)(*call_args)
        got_p = getattr(_kernels_py, name)(*call_args)
        if isinstance(got_c, float):
            assert got_c == got_p, f"{label}: backends disagree"
        else:
            assert np.array_equal(got_c, got_p), f"{label}: backends disagree"

    header = f"{'kernel':>18s}  {'python':>11s}"
    if _kernels is not None:
        header += f"  {'cython':>11s}  {'speedup':>8s}"
    print(header)
    for label, name, call_args in cases:
        t_py = best_of(getattr(_kernels_py, name), call_args, args.repeats)
        line = f"{label:>18s}  {fmt(t_py)}"
        if _kernels is not None:
            t_cy = best_of(getattr(_kernels, name), call_args, args.repeats)
            line += f"  {fmt(t_cy)}  {t_py / t_cy:7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
