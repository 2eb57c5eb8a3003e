"""Kernel backend selection.

The hot loops (x_min scans, collapse grids, quote merges) exist twice: as
numba ``@njit`` kernels and as vectorised numpy code.  ``IMPACTLAB_BACKEND``
picks one at import time::

    IMPACTLAB_BACKEND=numpy pytest      # force the pure-numpy path

Anything other than ``numpy`` means numba, falling back to numpy when numba
cannot be imported.
"""
import os

_requested = os.environ.get("IMPACTLAB_BACKEND", "numba").strip().lower()

if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        import numba  # noqa: F401
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
