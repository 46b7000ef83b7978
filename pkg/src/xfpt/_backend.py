"""Kernel backend selection.

Hot loops (Monte Carlo stepping, grid Dijkstra, erfcx) have a numba
implementation and a pure-numpy one. Set ``XFPT_BACKEND=numpy`` (or
``XFPT_NO_NUMBA=1``) to force the numpy path; numba is used otherwise when it
imports cleanly.
"""
from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_requested() -> bool:
    if os.environ.get("XFPT_NO_NUMBA", "").strip().lower() in _TRUTHY:
        return False
    return os.environ.get("XFPT_BACKEND", "numba").strip().lower() != "numpy"


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults, or an identity decorator without numba."""
    if _numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    kwargs.setdefault("error_model", "numpy")
    return _numba.njit(*args, **kwargs)


def max_threads() -> int:
    """Worker cap from ``XFPT_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("XFPT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)
