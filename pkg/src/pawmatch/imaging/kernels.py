"""Selects the warp kernel backend at import time.

Prefers the compiled extension and falls back to the numpy implementation.
Set ``PAWMATCH_KERNEL_BACKEND=numpy`` (or ``cython``) to force a backend;
forcing ``cython`` raises if the extension was not built.
"""

from __future__ import annotations

import os

from . import _warp_py

_requested = os.environ.get("PAWMATCH_KERNEL_BACKEND", "auto").lower()

if _requested == "numpy":
    _impl = _warp_py
elif _requested == "cython":
    from . import _warp as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _warp as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _warp_py

BACKEND: str = _impl.BACKEND
resize_bilinear = _impl.resize_bilinear
affine_bilinear = _impl.affine_bilinear
