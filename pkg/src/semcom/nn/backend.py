"""Backend selection for the hot patch kernels.

Set SEMCOM_BACKEND=numpy or SEMCOM_BACKEND=numba to force a path; by default
the numba kernels are used when numba imports cleanly.
"""

import os

from . import backend_numpy

_ENV_VAR = "SEMCOM_BACKEND"


def _load(name):
    if name == "numpy":
        return backend_numpy
    if name == "numba":
        from . import backend_numba

        return backend_numba
    raise ValueError(f"unknown backend {name!r} (expected 'numpy' or 'numba')")


def _default():
    try:
        from . import backend_numba

        return backend_numba
    except ImportError:
        return backend_numpy


_active = _load(os.environ[_ENV_VAR]) if _ENV_VAR in os.environ else _default()


def active_backend():
    return _active.NAME


def set_backend(name):
    """Switch kernels at runtime (used by tests and the benchmark)."""
    global _active
    _active = _load(name)


def im2col(xp, m, stride, oh, ow):
    return _active.im2col(xp, m, stride, oh, ow)


def col2im(col, hp, wp, stride):
    return _active.col2im(col, hp, wp, stride)
