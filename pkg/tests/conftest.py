import numpy as np
import pytest

from semcom.data import RawImage, save_image


def smooth_images(rng, n, h, w):
    """Seeded low-frequency test images in [0, 1], float32 (n, h, w, 3)."""
    ys, xs = np.mgrid[0:h, 0:w] / h
    imgs = []
    for _ in range(n):
        img = np.zeros((h, w, 3))
        for c in range(3):
            v = 0.5
            for _ in range(3):
                fy, fx = rng.uniform(0.5, 2.5, 2)
                ph = rng.uniform(0, 2 * np.pi, 2)
                v = v + rng.uniform(0.05, 0.18) * np.sin(
                    2 * np.pi * fy * ys + ph[0]
                ) * np.sin(2 * np.pi * fx * xs + ph[1])
            img[..., c] = v
        imgs.append(np.clip(img, 0, 1))
    return np.stack(imgs).astype(np.float32)


def write_dataset(dirpath, images, prefix="img"):
    """Save images as PNGs and return the manifest path."""
    lines = []
    for i, img in enumerate(images):
        px = np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)
        name = f"{prefix}{i:03d}.png"
        save_image(RawImage(px), dirpath / name)
        lines.append(f"{name}\t-\t-")
    manifest = dirpath / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, visible despite capture."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.REPORT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset(tmp_path, rng):
    imgs = smooth_images(rng, 8, 64, 64)
    manifest = write_dataset(tmp_path, imgs)
    return manifest, imgs
