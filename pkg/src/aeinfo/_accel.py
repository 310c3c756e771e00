"""Numba switch.

Set ``AEINFO_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  When numba is
missing the numpy kernels are used as well.
"""
import os

_flag = os.environ.get("AEINFO_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def default_backend():
    return "numba" if USE_NUMBA else "numpy"
