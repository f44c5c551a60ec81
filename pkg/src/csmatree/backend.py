"""Kernel backend selection: compiled extension if importable, else pure Python.

Set ``CSMATREE_PURE_PYTHON=1`` to force the fallback (used by the parity
tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _fppy

if os.environ.get("CSMATREE_PURE_PYTHON", "") == "1":
    _impl = _fppy
    BACKEND = "python"
else:
    try:
        from . import _fpcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fppy
        BACKEND = "python"

detailed_kernel = _impl.detailed_kernel
vector_kernel = _impl.vector_kernel


def backend_name() -> str:
    return BACKEND
