"""Backend-dispatched hot kernels (see ``_backend`` for the switch)."""
from ._backend import BACKEND

if BACKEND == "numba":
    from ._kernels_numba import (
        collapse_eps,
        collapse_grid,
        following_index,
        ks_sorted,
        prev_distinct_price,
        prevailing_index,
        xmin_scan,
    )
else:
    from ._kernels_numpy import (
        collapse_eps,
        collapse_grid,
        following_index,
        ks_sorted,
        prev_distinct_price,
        prevailing_index,
        xmin_scan,
    )

__all__ = [
    "BACKEND",
    "collapse_eps",
    "collapse_grid",
    "following_index",
    "ks_sorted",
    "prev_distinct_price",
    "prevailing_index",
    "xmin_scan",
]
