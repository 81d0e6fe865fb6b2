import numpy as np
import pytest

from reedit.core import ImageBuffer


def checker(size=256, block=16, lo=0, hi=255):
    """Deterministic checkerboard image."""
    idx = np.arange(size) // block
    board = (idx[:, None] + idx[None, :]) % 2
    arr = np.where(board[:, :, None] == 1, hi, lo).astype(np.uint8)
    return ImageBuffer(np.repeat(arr, 1, axis=2) * np.ones(3, dtype=np.uint8))


def gradient_image(size=256, axis=0):
    ramp = np.linspace(0, 255, size)
    if axis == 0:
        plane = np.tile(ramp[:, None], (1, size))
    else:
        plane = np.tile(ramp[None, :], (size, 1))
    arr = np.stack([plane, plane, plane], axis=2)
    return ImageBuffer(np.rint(arr).astype(np.uint8))


def uniform_image(value, size=256):
    return ImageBuffer(np.full((size, size, 3), value, dtype=np.uint8))


def noise_image(seed, size=256):
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8))


def circle_image(size=256, radius=70, center=None, fg=(220, 60, 40), bg=(20, 30, 90)):
    cy, cx = center or (size // 2, size // 2)
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    arr = np.empty((size, size, 3), dtype=np.uint8)
    arr[:] = np.array(bg, dtype=np.uint8)
    arr[mask] = np.array(fg, dtype=np.uint8)
    return ImageBuffer(arr)


def stripes_image(size=256, period=24, axis=1):
    idx = np.arange(size) // period % 2
    plane = np.where(idx == 1, 200, 40)
    if axis == 1:
        arr = np.tile(plane[None, :], (size, 1))
    else:
        arr = np.tile(plane[:, None], (1, size))
    return ImageBuffer(np.stack([arr, arr, arr], axis=2).astype(np.uint8))


def blob_image(size=256, sigma=50.0):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2
    g = np.exp(-((yy - c) ** 2 + (xx - c) ** 2) / (2 * sigma**2))
    arr = np.stack([g * 255, g * 180, g * 120], axis=2)
    return ImageBuffer(np.rint(arr).astype(np.uint8))


def fixture_images():
    """Deterministic geometric fixtures for metric tests."""
    from reedit.synth import synth_base

    return {
        "checker": checker(),
        "gradient-x": gradient_image(axis=1),
        "gradient-y": gradient_image(axis=0),
        "circle": circle_image(),
        "stripes": stripes_image(),
        "blob": blob_image(),
        "noise-17": noise_image(17),
        "scene-3": synth_base(3, 12345),
    }


def hash_fixture_images():
    """The 8 golden-hash fixtures: textured images whose DCT coefficients
    sit far from the median, so the bit pattern is implementation-stable
    (symmetric geometric images have exactly-tied coefficients)."""
    from reedit.synth import synth_base

    images = {f"scene-{k}": synth_base(k, 1000 + k) for k in range(6)}
    images["noise-17"] = noise_image(17)
    mix = synth_base(7, 2024).to_float() * 0.6 + noise_image(88).to_float() * 0.4
    images["mix"] = ImageBuffer(np.rint(mix).astype(np.uint8))
    return images


@pytest.fixture(scope="session")
def fixtures():
    return fixture_images()


@pytest.fixture(scope="session")
def sim_registry():
    from reedit import make_simulated_registry

    return make_simulated_registry(3)
