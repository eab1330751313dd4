"""Kernel backend selection.

The compiled extension is preferred when it was built; the numpy
implementation is the always-available fallback. CACAODX_KERNELS can
force a backend: "c" (compiled, error if missing), "py" (fallback),
or "auto" (default).
"""

from __future__ import annotations

import os

from . import pykernels

_choice = os.environ.get("CACAODX_KERNELS", "auto").lower()
if _choice not in ("auto", "c", "py"):
    raise ValueError(f"CACAODX_KERNELS must be auto, c or py, not {_choice!r}")

_impl = pykernels
BACKEND = "python"
if _choice in ("auto", "c"):
    try:
        from . import ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "c":
            raise

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward


def backend_name() -> str:
    """Which kernel implementation is active: "compiled" or "python"."""
    return BACKEND
