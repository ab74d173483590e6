"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-Python kernel module with
identical accumulation order is selected at import time), so any failure to
build it degrades to the slow path instead of breaking the install.  Set
GRADSURGEON_PURE_PYTHON=1 to skip the extension build entirely.
"""

import os
import sys

from setuptools import Extension, setup


def extension_modules():
    if os.environ.get("GRADSURGEON_PURE_PYTHON") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("Cython not available; building without compiled kernels", file=sys.stderr)
        return []
    # -ffp-contract=off keeps a*b+c as two rounded operations, matching the
    # pure-Python kernels bit for bit.  No -ffast-math for the same reason.
    compile_args = [] if sys.platform.startswith("win") else ["-O3", "-ffp-contract=off"]
    ext = Extension(
        "gradsurgeon._kernels",
        ["src/gradsurgeon/_kernels.pyx"],
        extra_compile_args=compile_args,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extension_modules())
