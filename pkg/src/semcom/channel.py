"""Power normalization, the AWGN channel, and capacity-based rate accounting.

The channel operates on real symbol vectors with per-real-symbol noise
variance matched to the complex-channel SNR; the complex symbol count
k = real_count / 2 enters only the rate bookkeeping.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError

_ZERO_NORM_EPS = 1e-30


@dataclass
class SymbolFrame:
    symbols: np.ndarray  # (b, length) unit-average-power real symbols
    power: float = 1.0

    @property
    def length(self):
        return self.symbols.shape[1]

    @property
    def k(self):
        return self.length // 2  # complex symbols


@dataclass
class ChannelConfig:
    snr_db: float = 10.0
    seed: int = 0


@dataclass
class RateBudget:
    n: int  # source dimensions, 3hw
    real_count: int  # h/t * w/t * e
    k: int  # complex symbols
    ratio: float  # real_count / n = e / (3 t^2)
    r_max: float  # bits per source dimension
    bit_budget: float  # bits per image


def power_normalize(r: np.ndarray):
    """Scale each row to unit mean-square: x = sqrt(L) * r / ||r||.

    Returns (x, cache) where cache feeds power_normalize_backward.
    """
    r = np.asarray(r)
    if r.ndim != 2:
        raise ValueError(f"expected (b, length) latent, got shape {r.shape}")
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    if np.any(norms <= _ZERO_NORM_EPS):
        raise NormalizationError("zero latent vector cannot be power-normalized")
    scale = math.sqrt(r.shape[1]) / norms
    x = r * scale
    return x, (r, norms, scale)


def power_normalize_backward(grad, cache):
    r, norms, scale = cache
    rg = np.sum(r * grad, axis=1, keepdims=True)
    return scale * (grad - r * (rg / (norms * norms)))


def snr_to_sigma2(snr_db):
    """Per-real-symbol noise variance for unit transmit power."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def awgn(frame: SymbolFrame, cfg: ChannelConfig, rng: np.random.Generator):
    """y = x + w with w ~ N(0, sigma^2 I); gradient w.r.t. x is identity."""
    sigma2 = snr_to_sigma2(cfg.snr_db)
    if sigma2 == 0.0:
        return frame.symbols.copy()
    noise = rng.normal(0.0, math.sqrt(sigma2), size=frame.symbols.shape)
    return frame.symbols + noise.astype(frame.symbols.dtype)


def rate_accounting(cfg, h, w, snr_db) -> RateBudget:
    """Capacity-derived bit budget for the digital baseline at (cfg, SNR)."""
    if h % cfg.t or w % cfg.t:
        raise ValueError(f"{h}x{w} not divisible by t={cfg.t}")
    n = 3 * h * w
    real_count = (h // cfg.t) * (w // cfg.t) * cfg.e
    k = real_count // 2
    ratio = real_count / n
    capacity = math.log2(1.0 + 10.0 ** (snr_db / 10.0))
    return RateBudget(
        n=n,
        real_count=real_count,
        k=k,
        ratio=ratio,
        r_max=(k / n) * capacity,
        bit_budget=k * capacity,
    )
