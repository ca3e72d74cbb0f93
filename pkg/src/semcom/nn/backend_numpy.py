"""Pure-numpy patch extraction / accumulation kernels."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def im2col(xp, m, stride, oh, ow):
    """Gather m x m patches from a padded NHWC tensor.

    Returns an array of shape (b, oh, ow, m, m, c).
    """
    win = sliding_window_view(xp, (m, m), axis=(1, 2))  # (b, H', W', c, m, m)
    win = win[:, ::stride, ::stride]
    if win.shape[1] != oh or win.shape[2] != ow:
        raise ValueError(
            f"im2col produced {win.shape[1]}x{win.shape[2]} patches, expected {oh}x{ow}"
        )
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def col2im(col, hp, wp, stride):
    """Scatter-add patches back onto a padded NHWC grid (adjoint of im2col)."""
    b, oh, ow, m, _, c = col.shape
    out = np.zeros((b, hp, wp, c), dtype=col.dtype)
    for ky in range(m):
        for kx in range(m):
            out[:, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride, :] += col[
                :, :, :, ky, kx, :
            ]
    return out
