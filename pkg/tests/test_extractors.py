import numpy as np
import pytest

from semcom.data import ImageBatch, ManifestEntry
from semcom.errors import FeatureLookupError, ShapeError
from semcom.extractors import (
    ExtractorSpec,
    build_lowlevel_stack,
    caption_embedding_dim,
    extract_caption_embedding,
    extract_segmentation,
    extractor_state_hash,
    read_embedding_file,
    write_embedding_file,
)

from conftest import smooth_images


def test_embedding_length_formula(rng):
    batch = ImageBatch(smooth_images(rng, 2, 128, 128))
    emb = extract_caption_embedding(batch, ExtractorSpec(seed=0), 8)
    assert emb.shape == (2, 512)  # 2*128*128/64


@pytest.mark.parametrize("h,w,t", [(64, 64, 8), (64, 128, 4), (32, 32, 2)])
def test_embedding_length_grid(rng, h, w, t):
    batch = ImageBatch(smooth_images(rng, 1, h, w))
    emb = extract_caption_embedding(batch, ExtractorSpec(seed=0), t)
    assert emb.shape == (1, 2 * h * w // t**2)


def test_identical_images_identical_embeddings(rng):
    img = smooth_images(rng, 1, 32, 32)[0]
    batch = ImageBatch(np.stack([img, img]))
    emb = extract_caption_embedding(batch, ExtractorSpec(seed=0), 4)
    assert np.array_equal(emb[0], emb[1])


def test_different_seeds_differ(rng):
    batch = ImageBatch(smooth_images(rng, 1, 32, 32))
    a = extract_caption_embedding(batch, ExtractorSpec(seed=0), 4)
    b = extract_caption_embedding(batch, ExtractorSpec(seed=1), 4)
    assert not np.allclose(a, b)


def test_extractor_is_frozen():
    spec = ExtractorSpec(seed=7)
    before = extractor_state_hash(spec, 64, 64, 8)
    # any amount of downstream work cannot touch the seeded state
    after = extractor_state_hash(spec, 64, 64, 8)
    assert before == after


def test_caption_dim_requires_divisibility():
    with pytest.raises(ShapeError):
        caption_embedding_dim(65, 64, 8)


def test_segmentation_constant_image():
    batch = ImageBatch(np.full((1, 8, 8, 3), 0.4, np.float32))
    seg = extract_segmentation(batch, ExtractorSpec(levels=8))
    assert seg.shape == (1, 8, 8, 1)
    assert np.all(seg == seg.flat[0])


def test_segmentation_binary_halves():
    img = np.zeros((1, 8, 8, 3), np.float32)
    img[:, :, 4:, :] = 1.0
    seg = extract_segmentation(ImageBatch(img), ExtractorSpec(levels=2))
    assert np.all(seg[0, :, :4, 0] == 0.0)
    assert np.all(seg[0, :, 4:, 0] == 1.0)


def test_segmentation_range_property(rng):
    # sweep of random images stays in [0, 1]
    for _ in range(50):
        batch = ImageBatch(rng.random((4, 8, 8, 3), dtype=np.float32))
        seg = extract_segmentation(batch, ExtractorSpec(levels=5))
        assert seg.min() >= 0.0 and seg.max() <= 1.0


def test_lowlevel_stack_roundtrip(rng):
    batch = ImageBatch(smooth_images(rng, 2, 16, 16))
    seg = extract_segmentation(batch, ExtractorSpec())
    f = build_lowlevel_stack(batch, seg)
    assert f.shape == (2, 16, 16, 4)
    assert np.array_equal(f[..., :3], batch.data)
    assert np.array_equal(f[..., 3:], seg)


def test_lowlevel_stack_shape_mismatch(rng):
    batch = ImageBatch(smooth_images(rng, 2, 16, 16))
    with pytest.raises(ShapeError):
        build_lowlevel_stack(batch, np.zeros((2, 8, 8, 1)))


def test_embedding_file_roundtrip(tmp_path, rng):
    table = {"a": rng.random(16).astype(np.float32), "b": rng.random(16).astype(np.float32)}
    path = tmp_path / "emb.bin"
    write_embedding_file(path, table)
    back = read_embedding_file(path)
    assert set(back) == {"a", "b"}
    for k in table:
        assert np.array_equal(back[k], table[k])


def test_precomputed_caption_lookup(tmp_path, rng):
    imgs = smooth_images(rng, 1, 16, 16)
    dim = 2 * 16 * 16 // 16  # t=4
    path = tmp_path / "emb.bin"
    write_embedding_file(path, {"x000": rng.random(dim).astype(np.float32)})
    entry = ManifestEntry(str(tmp_path / "x000.png"), None, str(path))
    emb = extract_caption_embedding(
        ImageBatch(imgs), ExtractorSpec(kind="file-precomputed"), 4, entries=[entry]
    )
    assert emb.shape == (1, dim)


def test_precomputed_caption_missing_id(tmp_path, rng):
    path = tmp_path / "emb.bin"
    write_embedding_file(path, {"other": rng.random(8).astype(np.float32)})
    entry = ManifestEntry(str(tmp_path / "x000.png"), None, str(path))
    with pytest.raises(FeatureLookupError):
        extract_caption_embedding(
            ImageBatch(smooth_images(rng, 1, 8, 8)),
            ExtractorSpec(kind="file-precomputed"), 2, entries=[entry],
        )


def test_precomputed_caption_wrong_length(tmp_path, rng):
    path = tmp_path / "emb.bin"
    write_embedding_file(path, {"x000": rng.random(7).astype(np.float32)})
    entry = ManifestEntry(str(tmp_path / "x000.png"), None, str(path))
    with pytest.raises(ShapeError):
        extract_caption_embedding(
            ImageBatch(smooth_images(rng, 1, 8, 8)),
            ExtractorSpec(kind="file-precomputed"), 2, entries=[entry],
        )


def test_precomputed_segmentation(tmp_path, rng):
    from PIL import Image

    labels = rng.integers(0, 5, (16, 16), dtype=np.uint8)
    Image.fromarray(labels, "L").save(tmp_path / "seg.png")
    entry = ManifestEntry(str(tmp_path / "x.png"), str(tmp_path / "seg.png"), None)
    seg = extract_segmentation(
        ImageBatch(smooth_images(rng, 1, 16, 16)),
        ExtractorSpec(kind="file-precomputed"), entries=[entry],
    )
    assert seg.shape == (1, 16, 16, 1)
    assert seg.min() >= 0.0 and seg.max() <= 1.0


def test_precomputed_segmentation_size_mismatch(tmp_path, rng):
    from PIL import Image

    Image.fromarray(np.zeros((8, 8), np.uint8), "L").save(tmp_path / "seg.png")
    entry = ManifestEntry(str(tmp_path / "x.png"), str(tmp_path / "seg.png"), None)
    with pytest.raises(ShapeError):
        extract_segmentation(
            ImageBatch(smooth_images(rng, 1, 16, 16)),
            ExtractorSpec(kind="file-precomputed"), entries=[entry],
        )
