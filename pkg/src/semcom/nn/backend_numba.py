"""Numba-jitted patch kernels; same contracts as backend_numpy.

Parallelism is over the batch axis only, so per-image accumulation order is
fixed and results are deterministic run to run.
"""

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(parallel=True, cache=True)
def im2col(xp, m, stride, oh, ow):
    b, hp, wp, c = xp.shape
    col = np.empty((b, oh, ow, m, m, c), dtype=xp.dtype)
    for n in prange(b):
        for i in range(oh):
            ii = i * stride
            for j in range(ow):
                jj = j * stride
                for ky in range(m):
                    for kx in range(m):
                        for ch in range(c):
                            col[n, i, j, ky, kx, ch] = xp[n, ii + ky, jj + kx, ch]
    return col


@njit(parallel=True, cache=True)
def col2im(col, hp, wp, stride):
    b, oh, ow, m, _, c = col.shape
    out = np.zeros((b, hp, wp, c), dtype=col.dtype)
    for n in prange(b):
        for i in range(oh):
            ii = i * stride
            for j in range(ow):
                jj = j * stride
                for ky in range(m):
                    for kx in range(m):
                        for ch in range(c):
                            out[n, ii + ky, jj + kx, ch] += col[n, i, j, ky, kx, ch]
    return out
