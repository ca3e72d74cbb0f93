import math

import numpy as np
import pytest

from semcom.errors import ShapeError
from semcom.metrics import (
    C1,
    C2,
    SSIM_WINDOW,
    format_psnr,
    gaussian_window,
    psnr,
    ssim,
    to_luminance,
)


def brute_force_psnr(ref, rec):
    err = 0.0
    ref = ref.astype(np.float64)
    rec = rec.astype(np.float64)
    for v in (ref - rec).reshape(-1):
        err += v * v
    mse = err / ref.size
    return math.inf if mse == 0 else 10 * math.log10(255.0**2 / mse)


def brute_force_ssim(ref, rec):
    x = to_luminance(ref)
    y = to_luminance(rec)
    w = gaussian_window()
    h, wd = x.shape
    vals = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(wd - SSIM_WINDOW + 1):
            xw = x[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            yw = y[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            mx = (w * xw).sum()
            my = (w * yw).sum()
            vx = (w * xw * xw).sum() - mx * mx
            vy = (w * yw * yw).sum() - my * my
            cov = (w * xw * yw).sum() - mx * my
            vals.append(
                ((2 * mx * my + C1) * (2 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2))
            )
    return float(np.mean(vals))


def test_psnr_identical_images():
    img = np.random.default_rng(0).integers(0, 256, (8, 8, 3), np.uint8)
    assert psnr(img, img) == math.inf
    assert format_psnr(psnr(img, img)) == "inf"


def test_psnr_uniform_error_16_levels():
    ref = np.full((8, 8, 3), 100, np.uint8)
    rec = np.full((8, 8, 3), 116, np.uint8)
    assert abs(psnr(ref, rec) - 10 * math.log10(65025 / 256)) < 1e-12


def test_psnr_zero_db():
    ref = np.zeros((4, 4, 3), np.uint8)
    rec = np.full((4, 4, 3), 255, np.uint8)
    assert abs(psnr(ref, rec)) < 1e-12


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def test_psnr_matches_brute_force(rng):
    for _ in range(20):
        ref = rng.integers(0, 256, (16, 16, 3), np.uint8)
        rec = rng.integers(0, 256, (16, 16, 3), np.uint8)
        assert abs(psnr(ref, rec) - brute_force_psnr(ref, rec)) < 1e-9


def test_ssim_identical_is_one(rng):
    img = rng.integers(0, 256, (24, 24, 3), np.uint8)
    assert abs(ssim(img, img) - 1.0) < 1e-12


def test_ssim_inverted_gradient_negative():
    ramp = np.linspace(0, 255, 16 * 16).reshape(16, 16).astype(np.uint8)
    img = np.stack([ramp] * 3, axis=-1)
    assert ssim(img, 255 - img) < 0


def test_ssim_matches_brute_force(rng):
    for _ in range(5):
        ref = rng.integers(0, 256, (20, 20, 3), np.uint8)
        rec = np.clip(
            ref.astype(int) + rng.integers(-30, 30, ref.shape), 0, 255
        ).astype(np.uint8)
        assert abs(ssim(ref, rec) - brute_force_ssim(ref, rec)) < 1e-6


def test_ssim_small_image_global_fallback(rng):
    ref = rng.integers(0, 256, (6, 6, 3), np.uint8)
    rec = rng.integers(0, 256, (6, 6, 3), np.uint8)
    val = ssim(ref, rec)
    assert -1.0 <= val <= 1.0
    assert abs(ssim(ref, ref) - 1.0) < 1e-12
