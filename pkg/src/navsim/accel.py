"""Kernel backend selection.

The hot inner loops (pixel raycasting, voxel ray traversal, distance
transforms) have two implementations: a numba ``@njit`` kernel and a pure
numpy/python fallback. Set ``NAVSIM_DISABLE_NUMBA=1`` before import to force
the fallbacks; results are identical, only slower. ``benchmarks/bench_kernels.py``
compares the two paths.
"""

import os

DISABLE_NUMBA = os.environ.get("NAVSIM_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled via NAVSIM_DISABLE_NUMBA")
    from numba import njit  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # transparent stand-in so kernel sources still import
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def use_numba() -> bool:
    """True when compiled kernels are active for this process."""
    return HAS_NUMBA
