import numpy as np
import pytest

from appleyield.imaging import BinaryMask, BoundingBox, LabImage, RgbImage, rgb_to_lab

# stable palette for flat-color synthetic frames
RED = (188, 28, 36)
GREEN = (62, 108, 48)
BLUE = (40, 60, 170)


def flat_rgb(colors, block=20, height=40):
    """Horizontal stripes of the given RGB colors, one block wide each."""
    width = block * len(colors)
    px = np.zeros((height, width, 3), dtype=np.uint8)
    for i, c in enumerate(colors):
        px[:, i * block : (i + 1) * block] = c
    return RgbImage(px)


def flat_lab(colors, block=20, height=40):
    return rgb_to_lab(flat_rgb(colors, block=block, height=height))


def disc_patch(k, radius=9, seed=0, jitter=2):
    """Binary patch of k filled discs with centers >= 1.5 diameters apart.

    Returns (mask, centers). Each disc covers >= 200 px at radius 9.
    """
    rng = np.random.default_rng(seed)
    spacing = int(3.2 * radius)
    per_row = int(np.ceil(np.sqrt(k)))
    size = per_row * spacing + 2 * radius + 8
    bits = np.zeros((size, size), dtype=bool)
    yy, xx = np.mgrid[0:size, 0:size]
    centers = []
    for i in range(k):
        cx = radius + 4 + spacing * (i % per_row) + int(rng.integers(-jitter, jitter + 1))
        cy = radius + 4 + spacing * (i // per_row) + int(rng.integers(-jitter, jitter + 1))
        bits |= (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
        centers.append((cx, cy))
    return BinaryMask(bits), centers


def apple_frame(size=96, n_discs=2, radius=8, seed=0):
    """Noisy green frame with red discs; returns (RgbImage, true apple mask)."""
    rng = np.random.default_rng(seed)
    px = np.array(GREEN) + rng.integers(-8, 9, (size, size, 3))
    mask, _ = disc_patch(n_discs, radius=radius, seed=seed, jitter=0)
    bits = np.zeros((size, size), dtype=bool)
    h = min(size, mask.height)
    w = min(size, mask.width)
    bits[:h, :w] = mask.bits[:h, :w]
    px[bits] = np.array(RED) + rng.integers(-6, 7, (int(bits.sum()), 3))
    return RgbImage(np.clip(px, 0, 255).astype(np.uint8)), BinaryMask(bits)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
