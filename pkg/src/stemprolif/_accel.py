"""Optional numba acceleration.

Set ``STEMPROLIF_DISABLE_NUMBA=1`` before import to run every kernel as
plain Python/numpy. Both paths consume identical random streams, so results
agree event for event.
"""
import os

_FLAG = os.environ.get("STEMPROLIF_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if HAVE_NUMBA else "python"
