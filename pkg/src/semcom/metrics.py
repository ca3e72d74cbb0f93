"""PSNR and SSIM on 0..255 images."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .extractors import LUMA_WEIGHTS

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255.0) ** 2
C2 = (0.03 * 255.0) ** 2


def psnr(ref, rec) -> float:
    """10 log10(255^2 / MSE); math.inf for identical images."""
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ShapeError(f"psnr shapes differ: {ref.shape} vs {rec.shape}")
    mse = float(np.mean((ref - rec) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def format_psnr(value):
    """Serialization for CSV output; infinity becomes the string 'inf'."""
    return "inf" if math.isinf(value) else repr(value)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def to_luminance(pixels):
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 3 and px.shape[2] == 3:
        return px @ LUMA_WEIGHTS
    if px.ndim == 2:
        return px
    raise ShapeError(f"expected h x w or h x w x 3 pixels, got {px.shape}")


def ssim(ref, rec) -> float:
    """Mean local SSIM on luminance with an 11x11 Gaussian window.

    Images smaller than the window fall back to global (whole-image)
    statistics with the same constants.
    """
    x = to_luminance(ref)
    y = to_luminance(rec)
    if x.shape != y.shape:
        raise ShapeError(f"ssim shapes differ: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        return _ssim_global(x, y)
    w = gaussian_window()

    def filt(img):
        win = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.einsum("ijyx,yx->ij", win, w)

    mu_x = filt(x)
    mu_y = filt(y)
    exx = filt(x * x)
    eyy = filt(y * y)
    exy = filt(x * y)
    var_x = exx - mu_x * mu_x
    var_y = eyy - mu_y * mu_y
    cov = exy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + C1) * (2.0 * cov + C2)
    den = (mu_x**2 + mu_y**2 + C1) * (var_x + var_y + C2)
    return float(np.mean(num / den))


def _ssim_global(x, y):
    mu_x, mu_y = x.mean(), y.mean()
    var_x, var_y = x.var(), y.var()
    cov = ((x - mu_x) * (y - mu_y)).mean()
    num = (2.0 * mu_x * mu_y + C1) * (2.0 * cov + C2)
    den = (mu_x**2 + mu_y**2 + C1) * (var_x + var_y + C2)
    return float(num / den)
