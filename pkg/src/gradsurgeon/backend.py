"""Kernel backend selection: compiled extension when available, else pure Python.

Both backends implement the same left-to-right reductions and agree bit for
bit (see tests/test_backend.py); the compiled one is one to two orders of
magnitude faster on the training hot path.  Selection:

1. ``GRADSURGEON_BACKEND=python`` or ``GRADSURGEON_BACKEND=cython`` forces a
   backend; asking for ``cython`` when the extension is not built is an error.
2. Otherwise the compiled extension is preferred, with silent fallback.

``benchmarks/bench_kernels.py`` measures the gap between the two.
"""

import os

_requested = os.environ.get("GRADSURGEON_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "python"):
    raise RuntimeError(
        f"GRADSURGEON_BACKEND must be 'cython' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from gradsurgeon import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from gradsurgeon import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "GRADSURGEON_BACKEND=cython but the compiled extension is not "
                "built; install with `pip install -e . --no-build-isolation`"
            ) from None
        from gradsurgeon import _kernels_py as _impl

        BACKEND = "python"

dot = _impl.dot
vsum = _impl.vsum
l2_norm = _impl.l2_norm
matvec = _impl.matvec
matvec_t = _impl.matvec_t
