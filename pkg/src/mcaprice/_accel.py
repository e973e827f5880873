"""Numba toggle.

Set ``MCAPRICE_DISABLE_NUMBA=1`` before import to run every kernel as plain
Python/numpy. Kernels are written in the numba-compatible subset so both
paths execute the same source.
"""

import os

_flag = os.environ.get("MCAPRICE_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError("numba disabled by MCAPRICE_DISABLE_NUMBA")
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if not NUMBA_ENABLED:
            return f
        return numba.njit(**opts)(f)

    if func is not None:
        return wrap(func)
    return wrap


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
