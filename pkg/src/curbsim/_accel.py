"""Optional numba acceleration for the hot kernels.

Kernels are written once (numpy-flavoured, loop-light) and compiled with
numba when it is importable. Set CURBSIM_NUMBA=0 to force the pure-numpy
fallback, i.e. the same source run uncompiled. benchmarks/bench_kernels.py
compares the two paths.
"""
from __future__ import annotations

import os


def _numba_wanted() -> bool:
    return os.environ.get("CURBSIM_NUMBA", "1").lower() not in ("0", "off", "false")


NUMBA_ENABLED = False
_njit = None

if _numba_wanted():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        pass


def maybe_jit(func):
    """Compile with numba when enabled, otherwise return func unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


_forced: dict = {}


def force_jit(func):
    """Compile with numba regardless of the env flag (benchmark use).

    Memoized per function; returns None when numba is not importable.
    """
    if func in _forced:
        return _forced[func]
    try:
        from numba import njit
    except ImportError:
        compiled = None
    else:
        compiled = njit(cache=True)(func)
    _forced[func] = compiled
    return compiled
