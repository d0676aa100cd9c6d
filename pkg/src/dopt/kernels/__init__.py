"""Hot kernels with a numba path and a numpy fallback.

The active implementation is chosen per call from :data:`dopt._accel.USE_NUMBA`.
"""
from .. import _accel
from . import _np

try:
    from . import _jit
except Exception:  # pragma: no cover
    _jit = None

__all__ = ["backend", "chol_update", "chol_downdate", "linear_scan", "quad_scan"]


def backend():
    return _jit if (_accel.USE_NUMBA and _jit is not None) else _np


def backend_name():
    return "numba" if backend() is _jit else "numpy"


def chol_update(Lf, x):
    backend().chol_update(Lf, x)


def chol_downdate(Lf, x, eps):
    return bool(backend().chol_downdate(Lf, x, eps))


def linear_scan(*args):
    return backend().linear_scan(*args)


def quad_scan(*args):
    return backend().quad_scan(*args)
