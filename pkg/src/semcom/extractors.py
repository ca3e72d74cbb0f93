"""Frozen multi-level feature extractors.

Three levels of side information per image batch: a per-image embedding
vector of length 2hw/t^2, a single-channel segmentation-style map, and the
concatenation of the normalized image with that map. The default "toy"
extractors are seeded, parameter-free stand-ins for the pretrained caption
and segmentation networks the system is designed around; precomputed
features can be loaded from files instead.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import FeatureLookupError, ShapeError

EMB_MAGIC = b"SEMCEMB1"
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass
class ExtractorSpec:
    kind: str = "toy-frozen"  # or "file-precomputed"
    seed: int = 0
    levels: int = 8

    def __post_init__(self):
        if self.kind not in ("toy-frozen", "file-precomputed"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")


def _toy_filters(seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((3, 3, 3, 8)) / np.sqrt(27.0)


def _toy_projection(seed, dim):
    rng = np.random.default_rng(seed + 1)
    return rng.standard_normal((8, dim)) / np.sqrt(8.0)


def extractor_state_hash(spec: ExtractorSpec, h, w, t) -> str:
    """Digest of the frozen extractor 'parameters' for freeze assertions."""
    dim = 2 * h * w // (t * t)
    payload = _toy_filters(spec.seed).tobytes() + _toy_projection(spec.seed, dim).tobytes()
    return hashlib.sha256(payload).hexdigest()


def caption_embedding_dim(h, w, t):
    if h % t or w % t:
        raise ShapeError(f"image {h}x{w} not divisible by downsampling factor {t}")
    return 2 * h * w // (t * t)


def extract_caption_embedding(batch, spec: ExtractorSpec, t, entries=None):
    """Per-image embedding of length 2hw/t^2; frozen and deterministic."""
    data = np.asarray(batch.data, dtype=np.float64)
    b, h, w, _ = data.shape
    dim = caption_embedding_dim(h, w, t)
    if spec.kind == "file-precomputed":
        if entries is None:
            raise FeatureLookupError("file-precomputed captions need manifest entries")
        rows = []
        for entry in entries:
            if entry.caption_path is None:
                raise FeatureLookupError(f"no caption embedding file for {entry.source_id}")
            table = read_embedding_file(entry.caption_path)
            if entry.source_id not in table:
                raise FeatureLookupError(
                    f"id {entry.source_id!r} absent from {entry.caption_path}"
                )
            vec = table[entry.source_id]
            if vec.shape != (dim,):
                raise ShapeError(f"stored embedding has length {vec.shape[0]}, expected {dim}")
            rows.append(vec)
        return np.stack(rows).astype(np.float32)
    # toy-frozen: fixed conv features, global average pool, fixed projection
    filt = _toy_filters(spec.seed)
    pooled = np.empty((b, 8))
    # 3x3 valid conv via windowed einsum; batch sizes here are small
    from numpy.lib.stride_tricks import sliding_window_view

    win = sliding_window_view(data, (3, 3), axis=(1, 2))  # (b, h-2, w-2, 3, 3, 3)
    feat = np.tanh(np.einsum("bijcyx,yxcf->bijf", win, filt))
    pooled = feat.mean(axis=(1, 2))
    emb = pooled @ _toy_projection(spec.seed, dim)
    return emb.astype(np.float32)


def extract_segmentation(batch, spec: ExtractorSpec, entries=None):
    """Segmentation-style map in [0, 1], shape b x h x w x 1; frozen."""
    data = np.asarray(batch.data, dtype=np.float64)
    b, h, w, _ = data.shape
    if spec.kind == "file-precomputed":
        if entries is None:
            raise FeatureLookupError("file-precomputed segmentation needs manifest entries")
        maps = []
        for entry in entries:
            if entry.seg_path is None:
                raise FeatureLookupError(f"no segmentation map for {entry.source_id}")
            with Image.open(entry.seg_path) as im:
                labels = np.asarray(im.convert("L"), dtype=np.float64)
            if labels.shape != (h, w):
                raise ShapeError(
                    f"segmentation map {labels.shape} does not match image {h}x{w}"
                )
            maps.append(labels / max(labels.max(), 1.0))
        return np.stack(maps)[..., None].astype(np.float32)
    # toy: luminance quantizer
    luma = data @ LUMA_WEIGHTS
    levels = spec.levels
    bins = np.minimum((luma * levels).astype(np.int64), levels - 1)
    return (bins / (levels - 1)).astype(np.float32)[..., None]


def build_lowlevel_stack(batch, seg):
    """Channel concat [R, G, B, seg] -> b x h x w x 4."""
    img = np.asarray(batch.data)
    seg = np.asarray(seg)
    if img.shape[:3] != seg.shape[:3] or seg.shape[3] != 1:
        raise ShapeError(f"image {img.shape} / segmentation {seg.shape} mismatch")
    return np.concatenate([img, seg.astype(img.dtype)], axis=-1)


def write_embedding_file(path, table):
    """Binary store: magic, uint32 count, uint32 dim, then per record a
    uint16 id length, the utf-8 id, and dim little-endian float32 values."""
    items = sorted(table.items())
    dims = {v.shape[0] for _, v in items}
    if len(dims) > 1:
        raise ShapeError(f"inconsistent embedding dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", len(items), dim))
        for sid, vec in items:
            sid_b = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(sid_b)))
            fh.write(sid_b)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_embedding_file(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != EMB_MAGIC:
            raise FeatureLookupError(f"{path}: bad magic {magic!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        table = {}
        for _ in range(count):
            (idlen,) = struct.unpack("<H", fh.read(2))
            sid = fh.read(idlen).decode("utf-8")
            buf = fh.read(4 * dim)
            if len(buf) != 4 * dim:
                raise FeatureLookupError(f"{path}: truncated record for {sid!r}")
            table[sid] = np.frombuffer(buf, dtype="<f4").copy()
    return table
