"""Backend selection for the hot loops.

The compiled extension is preferred. Setting ``DGIGA_PURE_PYTHON=1`` or a
missing build falls back to the numpy implementation with the same API.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DGIGA_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
find_spans = _impl.find_spans
basis_ders = _impl.basis_ders
accumulate = _impl.accumulate

__all__ = ["BACKEND", "accumulate", "basis_ders", "find_spans"]
