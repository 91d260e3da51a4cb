"""Backend switch for the compiled kernels.

Set ``LOGPOISSON_DISABLE_NUMBA=1`` before import to force the pure-numpy
paths. Without numba installed the numpy paths are used unconditionally.
"""
import os

_FLAG = os.environ.get("LOGPOISSON_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``, or an identity decorator."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
