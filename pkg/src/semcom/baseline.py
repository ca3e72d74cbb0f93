"""Capacity-bounded digital (JPEG) baseline with cliff-effect semantics.

Transport is assumed to run at channel capacity, so the baseline only
charges the JPEG payload bytes against the bit budget. When even the lowest
standard quality does not fit, reconstruction fails and a deterministic
mid-gray image is reported so PSNR under failure stays plottable.
"""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .channel import RateBudget
from .data import RawImage

QUALITY_GRID = range(1, 96)
FAILURE_GRAY = 128


@dataclass
class BaselineResult:
    reconstruction: RawImage
    failed: bool
    bits_used: int
    quality: int | None


def jpeg_size_table(img: RawImage):
    """Encoded byte size for every standard quality setting (1..95)."""
    pil = Image.fromarray(img.pixels, mode="RGB")
    sizes = {}
    for q in QUALITY_GRID:
        buf = io.BytesIO()
        pil.save(buf, format="JPEG", quality=q)
        sizes[q] = buf.tell()
    return sizes


def digital_baseline(img: RawImage, budget: RateBudget) -> BaselineResult:
    """Highest-quality JPEG whose payload fits the capacity bit budget."""
    byte_budget = budget.bit_budget / 8.0
    sizes = jpeg_size_table(img)  # size is not strictly monotone in quality
    fitting = [q for q, size in sizes.items() if size <= byte_budget]
    if not fitting:
        gray = np.full_like(img.pixels, FAILURE_GRAY)
        return BaselineResult(RawImage(gray, img.source_id), True, 0, None)
    q = max(fitting)
    pil = Image.fromarray(img.pixels, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=q)
    bits_used = buf.tell() * 8
    buf.seek(0)
    with Image.open(buf) as dec:
        pixels = np.asarray(dec.convert("RGB"), dtype=np.uint8)
    return BaselineResult(RawImage(pixels, img.source_id), False, bits_used, q)
