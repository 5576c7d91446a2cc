"""Switch between numba-compiled kernels and the plain numpy path.

Set ``RACENAV_DISABLE_NUMBA=1`` before import to run every kernel as
ordinary Python/numpy. Results agree to floating-point round-off; the
benchmark in ``benchmarks/`` compares the two.
"""

import os

USE_NUMBA = os.environ.get("RACENAV_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def jit(fn):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return _njit(cache=True)(fn)
    return fn
