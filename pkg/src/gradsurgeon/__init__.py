"""Gradient surgery for fine-tuning a feature encoder on biased data.

The package trains a low-rank adapter on top of a frozen base encoder while
editing each per-sample feature gradient before it reaches the parameters:
the half-space of the text-branch gradient that increases text-label
agreement is projected out, and the half-space of a frozen teacher's image
gradient that restores prior features is injected back, scaled by a
blending weight.  A compiled kernel backend accelerates the inner loops; a
pure-Python fallback with identical accumulation order is selected
automatically when the extension is unavailable.
"""

from gradsurgeon.backend import BACKEND

__all__ = ["BACKEND", "__version__"]
__version__ = "0.1.0"
