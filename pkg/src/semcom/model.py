"""Joint semantic-channel codec: per-branch encoders producing the latent
channel stack, truncation to e transmitted channels, receiver-side splitting,
per-branch decoders, and the multi-feature fusion reconstructor.
"""

import io
import json
import math
import zipfile
from dataclasses import dataclass, field, asdict

import numpy as np

from .channel import SymbolFrame, power_normalize, power_normalize_backward
from .errors import CheckpointError, ConfigError, ShapeError
from .nn.layers import (
    GDN,
    Conv2D,
    ConvTranspose2D,
    Dense,
    PReLU,
    Reshape,
    Sequential,
    Sigmoid,
)

CHECKPOINT_VERSION = 1
VARIANTS = ("full", "no_caption", "no_segmentation")


@dataclass
class ModelConfig:
    t: int = 8
    l: int = 4
    e: int = 8
    o: int = 16
    h: int = 64
    w: int = 64
    base_kernel: int = 3
    seed: int = 0
    hidden_enc: int = 32
    hidden_dec: int = 32
    hidden_fusion: int = 64
    variant: str = "full"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.t not in (2, 4, 8, 16):
            raise ConfigError(f"t must be a power of two in 2..16, got {self.t}")
        if self.l < 3:
            raise ConfigError(f"l must be >= 3, got {self.l}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        total = self.total_width()
        if not 1 <= self.e <= total:
            raise ConfigError(f"e must be in 1..{total} for this layout, got {self.e}")
        if self.o <= 0 or self.o % 2:
            raise ConfigError(f"o must be a positive even integer, got {self.o}")
        if self.base_kernel < 3 or self.base_kernel % 2 == 0:
            raise ConfigError(f"base_kernel must be odd >= 3, got {self.base_kernel}")
        if self.h % self.t or self.w % self.t:
            raise ConfigError(f"h, w must be divisible by t; got {self.h}x{self.w}, t={self.t}")

    def branch_ids(self):
        ids = list(range(1, self.l + 1))
        if self.variant == "no_caption":
            ids.remove(1)
        elif self.variant == "no_segmentation":
            ids.remove(2)
        return ids

    def branch_width(self, bid):
        if bid in (1, 2):
            return 1
        if bid == 3 and self.variant == "no_segmentation":
            return 2  # the low-level stack lost its segmentation channel
        return 3

    def total_width(self):
        # full: 1 + 1 + 3(l-2) = 3l - 4; variants drop one branch
        return sum(self.branch_width(b) for b in self.branch_ids())

    def branch_kernel(self, bid):
        return self.base_kernel if bid <= 3 else 2 * bid - 5

    def lowlevel_channels(self):
        return 3 if self.variant == "no_segmentation" else 4

    def decoder_out_width(self, bid):
        return self.o // 2 if bid in (1, 2) else self.o


@dataclass
class ChannelLayout:
    """Per-branch channel widths and the fixed slot order used when the
    latent stack is truncated to e transmitted channels.

    Slots are (branch_id, channel_within_branch); the low-level stack branch
    (id 3) goes first so the e=1 operating point transmits only that branch.
    """

    branch_ids: list[int]
    widths: dict[int, int]
    selection_order: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def for_config(cls, cfg: ModelConfig):
        ids = cfg.branch_ids()
        widths = {b: cfg.branch_width(b) for b in ids}
        order = []
        priority = [3] + [b for b in ids if b != 3]
        for b in priority:
            order.extend((b, c) for c in range(widths[b]))
        return cls(ids, widths, order)

    @property
    def total_width(self):
        return sum(self.widths.values())

    def concat_offsets(self):
        off, out = 0, {}
        for b in self.branch_ids:
            out[b] = off
            off += self.widths[b]
        return out

    def keep_indices(self, e):
        """Concat positions of the first e slots in selection order."""
        if not 1 <= e <= self.total_width:
            raise ValueError(f"e must be in 1..{self.total_width}, got {e}")
        offsets = self.concat_offsets()
        return [offsets[b] + c for b, c in self.selection_order[:e]]


def select_channels(r, layout: ChannelLayout, e):
    """Keep the first e channel slots in selection order."""
    return r[..., layout.keep_indices(e)]


def decode_split(y_tensor, layout: ChannelLayout, e=None):
    """Inverse of select_channels: route received channels back to their
    branches; channels that were not transmitted come back as zeros."""
    if e is None:
        e = y_tensor.shape[-1]
    if y_tensor.shape[-1] != e:
        raise ShapeError(f"received width {y_tensor.shape[-1]} != e={e}")
    qs = {
        b: np.zeros(y_tensor.shape[:-1] + (wd,), dtype=y_tensor.dtype)
        for b, wd in layout.widths.items()
    }
    for pos, (b, c) in enumerate(layout.selection_order[:e]):
        qs[b][..., c] = y_tensor[..., pos]
    return qs


class MultiLevelCodec:
    """End-to-end model; forward caches everything backward needs."""

    def __init__(self, cfg: ModelConfig, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = dtype
        self.layout = ChannelLayout.for_config(cfg)
        rng = np.random.default_rng(cfg.seed)
        ht, wt = cfg.h // cfg.t, cfg.w // cfg.t
        self.latent_hw = (ht, wt)
        self.encoders = {}
        self.decoders = {}
        for bid in cfg.branch_ids():
            self.encoders[bid] = self._build_encoder(bid, rng)
            self.decoders[bid] = self._build_decoder(bid, rng)
        self.fusion = self._build_fusion(rng)

    # -- construction -----------------------------------------------------
    def _build_encoder(self, bid, rng):
        cfg, dt = self.cfg, self.dtype
        k = cfg.branch_kernel(bid)
        hid = cfg.hidden_enc
        out_w = cfg.branch_width(bid)
        if bid == 1:
            ht, wt = self.latent_hw
            dim_in = 2 * cfg.h * cfg.w // (cfg.t * cfg.t)
            layers = [
                Dense(dim_in, ht * wt, rng, dt),
                Reshape((ht, wt, 1)),
                Conv2D(1, hid, k, 1, rng, dt),
                GDN(hid, dtype=dt),
                Conv2D(hid, out_w, k, 1, rng, dt),
                GDN(out_w, dtype=dt),
            ]
            return Sequential(layers)
        in_ch = {2: 1, 3: cfg.lowlevel_channels()}.get(bid, 3)
        layers = []
        n_down = int(math.log2(cfg.t))
        ch = in_ch
        for _ in range(n_down):
            layers += [Conv2D(ch, hid, k, 2, rng, dt), GDN(hid, dtype=dt)]
            ch = hid
        layers += [Conv2D(ch, out_w, k, 1, rng, dt), GDN(out_w, dtype=dt)]
        return Sequential(layers)

    def _build_decoder(self, bid, rng):
        cfg, dt = self.cfg, self.dtype
        hid = cfg.hidden_dec
        in_w = cfg.branch_width(bid)
        out_w = cfg.decoder_out_width(bid)
        layers = [
            ConvTranspose2D(in_w, hid, 3, 1, rng, dt),
            GDN(hid, inverse=True, dtype=dt),
            ConvTranspose2D(hid, hid, 3, 1, rng, dt),
            GDN(hid, inverse=True, dtype=dt),
            ConvTranspose2D(hid, out_w, 3, 2, rng, dt),
        ]
        return Sequential(layers)

    def _build_fusion(self, rng):
        cfg, dt = self.cfg, self.dtype
        hid = cfg.hidden_fusion
        in_w = sum(cfg.decoder_out_width(b) for b in cfg.branch_ids())
        n_up = int(math.log2(cfg.t // 2))
        layers = []
        ch = in_w
        if n_up == 0:
            layers += [ConvTranspose2D(ch, hid, 3, 1, rng, dt), PReLU(hid, dtype=dt)]
            ch = hid
        for _ in range(n_up):
            layers += [ConvTranspose2D(ch, hid, 3, 2, rng, dt), PReLU(hid, dtype=dt)]
            ch = hid
        layers += [ConvTranspose2D(ch, 3, 3, 1, rng, dt), Sigmoid()]
        return Sequential(layers)

    # -- parameters --------------------------------------------------------
    def params(self):
        out = {}
        for bid in self.cfg.branch_ids():
            for name, p in self.encoders[bid].params().items():
                out[f"branch{bid}.enc.{name}"] = p
            for name, p in self.decoders[bid].params().items():
                out[f"branch{bid}.dec.{name}"] = p
        for name, p in self.fusion.params().items():
            out[f"fusion.{name}"] = p
        return out

    def zero_grads(self):
        for p in self.params().values():
            p.grad[...] = 0.0

    # -- forward / backward -------------------------------------------------
    def _branch_input(self, bid, img, p, a, f):
        if bid == 1:
            return p
        if bid == 2:
            return a
        if bid == 3:
            return f
        return img

    def encode(self, img, p, a, f):
        """Concatenated latent r of width total_width (3l-4 for the full
        variant) on the h/t x w/t grid."""
        cfg = self.cfg
        b, h, w, c = img.shape
        if (h, w, c) != (cfg.h, cfg.w, 3):
            raise ShapeError(f"image batch {img.shape} != (b, {cfg.h}, {cfg.w}, 3)")
        cs = []
        for bid in cfg.branch_ids():
            x = np.asarray(self._branch_input(bid, img, p, a, f), dtype=self.dtype)
            cs.append(self.encoders[bid].forward(x))
        return np.concatenate(cs, axis=-1)

    def forward(self, img, p=None, a=None, f=None, noise=None):
        """Full pipeline: encode, truncate, power-normalize, add channel
        noise (an array broadcastable to the symbol frame, or None for a
        noiseless channel), split, decode, fuse. Returns the reconstruction
        in (0, 1); cache for backward is kept on the instance.
        """
        cfg = self.cfg
        img = np.asarray(img, dtype=self.dtype)
        r = self.encode(img, p, a, f)
        keep = self.layout.keep_indices(cfg.e)
        sel = r[..., keep]
        b = sel.shape[0]
        flat = sel.reshape(b, -1)
        x, pn_cache = power_normalize(flat)
        y = x if noise is None else x + np.asarray(noise, dtype=x.dtype)
        ysel = y.reshape(sel.shape)
        qs = decode_split(ysel, self.layout, cfg.e)
        ds = [self.decoders[bid].forward(qs[bid]) for bid in cfg.branch_ids()]
        v = np.concatenate(ds, axis=-1)
        out = self.fusion.forward(v)
        self._cache = {
            "r_shape": r.shape,
            "sel_shape": sel.shape,
            "keep": keep,
            "pn_cache": pn_cache,
            "d_widths": [d.shape[-1] for d in ds],
        }
        self._last_frame = SymbolFrame(symbols=x)
        return out

    def backward(self, dout):
        cfg = self.cfg
        cache = self._cache
        dv = self.fusion.backward(dout)
        # split fusion grad back to the per-branch decoders
        dqs = {}
        off = 0
        for bid, wd in zip(cfg.branch_ids(), cache["d_widths"]):
            dqs[bid] = self.decoders[bid].backward(dv[..., off : off + wd])
            off += wd
        # route decoder input grads back to the transmitted slots
        dy_sel = np.zeros(cache["sel_shape"], dtype=dout.dtype)
        for pos, (bid, c) in enumerate(self.layout.selection_order[: cfg.e]):
            dy_sel[..., pos] = dqs[bid][..., c]
        b = dy_sel.shape[0]
        dx = dy_sel.reshape(b, -1)  # channel noise is additive: identity grad
        dflat = power_normalize_backward(dx, cache["pn_cache"])
        dsel = dflat.reshape(cache["sel_shape"])
        dr = np.zeros(cache["r_shape"], dtype=dout.dtype)
        dr[..., cache["keep"]] = dsel
        off = 0
        for bid in cfg.branch_ids():
            wd = self.layout.widths[bid]
            self.encoders[bid].backward(dr[..., off : off + wd])
            off += wd

    # -- checkpointing -------------------------------------------------------
    def save(self, path):
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "config": asdict(self.cfg),
        }
        arrays = {name: p.data.astype(np.float32) for name, p in self.params().items()}
        buf = io.BytesIO()
        np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path, expect_config: ModelConfig | None = None, dtype=np.float32):
        try:
            with np.load(path) as npz:
                if "__meta__" not in npz:
                    raise CheckpointError(f"{path}: missing metadata entry")
                meta = json.loads(bytes(npz["__meta__"]).decode())
                arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
        except (OSError, ValueError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {meta.get('format_version')} "
                f"!= supported {CHECKPOINT_VERSION}"
            )
        cfg = ModelConfig(**meta["config"])
        if expect_config is not None and asdict(expect_config) != asdict(cfg):
            raise CheckpointError(
                f"checkpoint config {asdict(cfg)} does not match run config "
                f"{asdict(expect_config)}"
            )
        model = cls(cfg, dtype=dtype)
        params = model.params()
        if set(params) != set(arrays):
            missing = set(params) ^ set(arrays)
            raise CheckpointError(f"{path}: parameter name mismatch: {sorted(missing)[:5]}")
        for name, p in params.items():
            if p.data.shape != arrays[name].shape:
                raise CheckpointError(
                    f"{path}: {name} shape {arrays[name].shape} != {p.data.shape}"
                )
            p.data[...] = arrays[name].astype(dtype)
        return model
