"""MSE objective and the Adam training loop with frozen feature extractors."""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import extractors
from .channel import snr_to_sigma2
from .data import DatasetManifest, make_batches
from .errors import DivergenceError, ShapeError
from .extractors import ExtractorSpec
from .model import ModelConfig, MultiLevelCodec
from .nn.optim import Adam


@dataclass
class TrainConfig:
    cfg: ModelConfig
    lr: float = 1e-4
    batch_size: int = 32
    steps: int = 1000
    train_snr_db: float = 10.0
    seed: int = 0
    extractor: ExtractorSpec = field(default_factory=ExtractorSpec)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")


def mse_loss(s, s_hat):
    """(1/N) sum_k (1/n) ||S_k - S_hat_k||^2 on [0, 1] images."""
    s = np.asarray(s)
    s_hat = np.asarray(s_hat)
    if s.shape != s_hat.shape:
        raise ShapeError(f"loss shapes differ: {s.shape} vs {s_hat.shape}")
    return float(np.mean((s.astype(np.float64) - s_hat.astype(np.float64)) ** 2))


def mse_loss_grad(s, s_hat):
    """Gradient of mse_loss w.r.t. s_hat."""
    diff = np.asarray(s_hat, dtype=np.float64) - np.asarray(s, dtype=np.float64)
    return (2.0 / diff.size) * diff


def batch_features(batch, spec, t, entries=None):
    """Frozen extractor outputs (p, a, f) for one batch; the low-level stack
    drops its segmentation channel in the no_segmentation variant (handled
    by the caller passing the raw image as f)."""
    p = extractors.extract_caption_embedding(batch, spec, t, entries=entries)
    a = extractors.extract_segmentation(batch, spec, entries=entries)
    f = extractors.build_lowlevel_stack(batch, a)
    return p, a, f


class _EndlessBatches:
    """Reshuffled epochs of training batches, restarted forever."""

    def __init__(self, manifest, b, rng, h, w):
        self.manifest, self.b, self.rng, self.h, self.w = manifest, b, rng, h, w
        self._it = iter(())

    def __next__(self):
        try:
            return next(self._it)
        except StopIteration:
            self._it = make_batches(
                self.manifest, self.b, self.rng, self.h, self.w, training=True
            )
            return next(self._it)


def train(manifest: DatasetManifest, tcfg: TrainConfig, out_dir=None, model=None):
    """Run the optimization loop; returns (model, loss_history).

    If out_dir is given, a checkpoint (model.npz) and a loss CSV
    (loss.csv with step,loss,snr_db rows) are written there. A freshly
    seeded model is built unless one is passed in.
    """
    cfg = tcfg.cfg
    if model is None:
        model = MultiLevelCodec(cfg)
    if model.cfg.variant == "no_caption" and cfg.variant != "no_caption":
        raise ValueError("model/config variant mismatch")
    params = model.params()
    opt = Adam(params, lr=tcfg.lr)
    data_rng = np.random.default_rng(tcfg.seed)
    noise_rng = np.random.default_rng(tcfg.seed + 1)
    batches = _EndlessBatches(manifest, tcfg.batch_size, data_rng, cfg.h, cfg.w)
    sigma = math.sqrt(snr_to_sigma2(tcfg.train_snr_db))
    ext_hash_before = extractors.extractor_state_hash(tcfg.extractor, cfg.h, cfg.w, cfg.t)

    history = []
    for step in range(tcfg.steps):
        batch, entries = next(batches)
        p, a, f = batch_features(batch, tcfg.extractor, cfg.t, entries=entries)
        if cfg.variant == "no_segmentation":
            f = batch.data
        frame_len = (cfg.h // cfg.t) * (cfg.w // cfg.t) * cfg.e
        noise = (
            noise_rng.normal(0.0, sigma, size=(batch.data.shape[0], frame_len))
            if sigma > 0
            else None
        )
        out = model.forward(batch.data, p, a, f, noise=noise)
        loss = mse_loss(batch.data, out)
        history.append((step, loss, tcfg.train_snr_db))
        if not math.isfinite(loss):
            if out_dir:
                model.save(os.path.join(out_dir, "model.diverged.npz"))
                _write_loss_csv(os.path.join(out_dir, "loss.csv"), history)
            raise DivergenceError(f"non-finite loss {loss} at step {step}")
        model.zero_grads()
        model.backward(mse_loss_grad(batch.data, out).astype(model.dtype))
        opt.step()

    ext_hash_after = extractors.extractor_state_hash(tcfg.extractor, cfg.h, cfg.w, cfg.t)
    assert ext_hash_before == ext_hash_after, "frozen extractor state changed"

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        model.save(os.path.join(out_dir, "model.npz"))
        _write_loss_csv(os.path.join(out_dir, "loss.csv"), history)
    return model, history


def _write_loss_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "snr_db"])
        for step, loss, snr in history:
            writer.writerow([step, repr(loss), snr])
