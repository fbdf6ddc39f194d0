"""Numba switch for the numeric kernels.

Set ``SWARMGOAL_PURE_PYTHON=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to run
the plain Python/numpy versions of every kernel. Both paths share one source.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _flag(name):
    return os.environ.get(name, "").strip().lower() in _TRUTHY


USE_NUMBA = not (_flag("SWARMGOAL_PURE_PYTHON") or _flag("NUMBA_DISABLE_JIT"))

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:

    def njit(func):
        return func


def backend():
    """Name of the active kernel backend (``"numba"`` or ``"python"``)."""
    return "numba" if USE_NUMBA else "python"
