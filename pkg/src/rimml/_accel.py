"""Numba switch.

Set ``RIMML_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
debugging or on platforms without a working numba install.
"""
import os

_DISABLED = os.environ.get("RIMML_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by RIMML_DISABLE_NUMBA")
    import numba
    HAS_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # always available; avoids probing for an outdated TBB
        numba.config.THREADING_LAYER = "workqueue"

except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


if HAS_NUMBA:
    prange = numba.prange
else:
    prange = range
