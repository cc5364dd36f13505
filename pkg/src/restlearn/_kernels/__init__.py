"""Kernel backend selection.

The compiled extension is preferred when it imports cleanly; otherwise the
numpy fallback takes over. ``RESTLEARN_KERNELS=pure`` forces the fallback,
``RESTLEARN_KERNELS=native`` makes a missing extension a hard error (useful
for benchmarks and CI).
"""

import os

from . import pure

_requested = os.environ.get("RESTLEARN_KERNELS", "auto").lower()

if _requested == "pure":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = pure
        BACKEND = "pure"

affine_sample = _impl.affine_sample
im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "affine_sample", "im2col", "col2im", "pure"]
