"""Image ingestion, normalization, cropping, and manifest-driven batching."""

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, ImageFormatError, SemcomError


@dataclass
class RawImage:
    pixels: np.ndarray  # uint8, h x w x 3
    source_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ImageFormatError(f"expected h x w x 3 pixels, got {px.shape}")
        self.pixels = px.astype(np.uint8)


@dataclass
class ImageBatch:
    data: np.ndarray  # float, b x h x w x 3 in [0, 1]

    @property
    def shape(self):
        return self.data.shape


@dataclass
class ManifestEntry:
    image_path: str
    seg_path: str | None = None
    caption_path: str | None = None

    @property
    def source_id(self):
        return os.path.splitext(os.path.basename(self.image_path))[0]


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    split: str = "train"


def load_image(path) -> RawImage:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            pixels = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    return RawImage(pixels, source_id=os.path.splitext(os.path.basename(str(path)))[0])


def save_image(img: RawImage, path):
    Image.fromarray(img.pixels, mode="RGB").save(path)


def normalize(img: RawImage) -> np.ndarray:
    """Pixel values scaled to [0, 1] as float32 (h x w x 3)."""
    return img.pixels.astype(np.float32) / 255.0


def denormalize(batch: ImageBatch) -> list[RawImage]:
    """Clamp to [0, 1], scale to 0..255 and round to uint8 images."""
    data = np.clip(np.asarray(batch.data), 0.0, 1.0)
    pixels = np.rint(data * 255.0).astype(np.uint8)
    return [RawImage(pixels[i]) for i in range(pixels.shape[0])]


def _reflect_pad_to(pixels, h, w):
    ph = max(0, h - pixels.shape[0])
    pw = max(0, w - pixels.shape[1])
    if ph == 0 and pw == 0:
        return pixels
    return np.pad(pixels, ((0, ph), (0, pw), (0, 0)), mode="reflect")


def random_crop(img: RawImage, h: int, w: int, rng: np.random.Generator) -> RawImage:
    if h <= 0 or w <= 0:
        raise ValueError(f"crop size must be positive, got {h}x{w}")
    px = _reflect_pad_to(img.pixels, h, w)
    y = int(rng.integers(0, px.shape[0] - h + 1))
    x = int(rng.integers(0, px.shape[1] - w + 1))
    return RawImage(px[y : y + h, x : x + w], source_id=img.source_id)


def center_crop(img: RawImage, h: int, w: int) -> RawImage:
    px = _reflect_pad_to(img.pixels, h, w)
    y = (px.shape[0] - h) // 2
    x = (px.shape[1] - w) // 2
    return RawImage(px[y : y + h, x : x + w], source_id=img.source_id)


def read_manifest(path, split="train") -> DatasetManifest:
    """Tab-separated lines: image_path, seg_path or '-', caption_path or '-'.

    Relative paths are resolved against the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                parts = line.split()
            if not 1 <= len(parts) <= 3:
                raise DatasetError(f"{path}:{lineno}: expected 1-3 fields, got {len(parts)}")

            def resolve(p):
                if p in (None, "-"):
                    return None
                return p if os.path.isabs(p) else os.path.join(base, p)

            parts = parts + ["-"] * (3 - len(parts))
            entry = ManifestEntry(resolve(parts[0]), resolve(parts[1]), resolve(parts[2]))
            for fp in (entry.image_path, entry.seg_path, entry.caption_path):
                if fp is not None and not os.path.exists(fp):
                    raise DatasetError(f"{path}:{lineno}: missing file {fp}")
            entries.append(entry)
    return DatasetManifest(entries, split=split)


def make_batches(manifest: DatasetManifest, b, rng, h, w, training=True, epochs=1):
    """Yield (ImageBatch, entries) pairs, shuffled per epoch under rng.

    Images are randomly cropped to h x w in training mode and center-cropped
    in eval mode. The final partial batch is dropped only in training mode.
    """
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    if not manifest.entries:
        raise DatasetError("empty manifest")
    n = len(manifest.entries)
    for _ in range(epochs):
        order = rng.permutation(n) if training else np.arange(n)
        for start in range(0, n, b):
            idx = order[start : start + b]
            if training and len(idx) < b:
                break
            imgs = []
            entries = []
            for i in idx:
                entry = manifest.entries[int(i)]
                img = load_image(entry.image_path)
                img = random_crop(img, h, w, rng) if training else center_crop(img, h, w)
                imgs.append(normalize(img))
                entries.append(entry)
            yield ImageBatch(np.stack(imgs, axis=0)), entries


def num_batches_per_epoch(n_entries, b, training=True):
    return n_entries // b if training else -(-n_entries // b)


__all__ = [
    "DatasetManifest",
    "ImageBatch",
    "ManifestEntry",
    "RawImage",
    "SemcomError",
    "center_crop",
    "denormalize",
    "load_image",
    "make_batches",
    "normalize",
    "num_batches_per_epoch",
    "random_crop",
    "read_manifest",
    "save_image",
]
