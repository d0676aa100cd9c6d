"""Selection between the numba kernels and the pure-numpy fallbacks.

Set ``DOPT_DISABLE_NUMBA=1`` in the environment to force the numpy path.
The flag is read once at import; tests flip :data:`USE_NUMBA` directly.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("DOPT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

USE_NUMBA = numba is not None and not _DISABLED

numba_kwargs = {
    "nopython": True,
    "cache": True,
    "nogil": True,
}


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if numba is None:  # pragma: no cover
        return func
    return numba.jit(**numba_kwargs)(func)


def use_numba():
    return USE_NUMBA
