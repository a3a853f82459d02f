"""Select numba or numpy kernels.

``TVFLUID_BACKEND=numpy`` forces the pure-numpy path; otherwise numba is
used when it imports cleanly.
"""

import os

from . import _kernels_np

try:
    from . import _kernels_nb
except ImportError:  # numba missing or broken
    _kernels_nb = None

BACKEND = os.environ.get("TVFLUID_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"TVFLUID_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if BACKEND == "numba" and _kernels_nb is None:
    BACKEND = "numpy"

kernels = _kernels_nb if BACKEND == "numba" else _kernels_np


def get(name):
    """Kernel module for ``name`` regardless of the active selection."""
    if name == "numpy":
        return _kernels_np
    if name == "numba":
        if _kernels_nb is None:
            raise ImportError("numba backend unavailable")
        return _kernels_nb
    raise ValueError(name)
