"""Core raster types: RGB/LAB images, binary masks, bounding boxes,
connected components and box geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ValidationError

# D65 reference white and the sRGB -> XYZ linear transform.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# D65 white as produced by the matrix itself (row sums), so pure white
# lands exactly on L=100, a=b=0 despite the matrix's published rounding
_WHITE_D65 = _SRGB_TO_XYZ.sum(axis=1)


@dataclass(frozen=True)
class RgbImage:
    """8-bit sRGB frame, pixels stored as an (H, W, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("RgbImage requires an (H, W, 3) pixel array")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LabImage:
    """CIELAB frame with float channels, L in [0, 100], a/b in [-128, 127]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError("LabImage requires an (H, W, 3) pixel array")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel boolean mask with the dimensions of the frame it annotates."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValidationError("BinaryMask requires an (H, W) boolean array")
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def foreground_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box, (x, y) top-left inclusive, w/h >= 1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValidationError(f"degenerate box {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def clamped(self, width: int, height: int) -> "BoundingBox":
        x1 = max(self.x, 0)
        y1 = max(self.y, 0)
        x2 = min(self.x2, width)
        y2 = min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            raise ValidationError("box lies entirely outside the frame")
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Component:
    id: int
    pixel_count: int
    bbox: BoundingBox
    centroid: tuple[float, float]  # (x, y)


@dataclass(frozen=True)
class ComponentSet:
    labels: np.ndarray  # per-pixel component id, 0 = background
    components: list[Component] = field(default_factory=list)


def rgb_to_lab(img: RgbImage) -> LabImage:
    """sRGB (D65) -> CIELAB, applied per pixel. Dimensions are preserved."""
    srgb = img.pixels.astype(np.float64) / 255.0
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * fy - 16.0
    lab[..., 1] = 500.0 * (fx - fy)
    lab[..., 2] = 200.0 * (fy - fz)
    return LabImage(lab)


def connected_components(mask: BinaryMask, connectivity: int = 8) -> ComponentSet:
    """Label maximal connected foreground regions.

    Ids are reassigned by raster-scan order of each component's first
    pixel, so the output is byte-reproducible.
    """
    if connectivity not in (4, 8):
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    raw, n = ndimage.label(mask.bits, structure=structure)
    if n == 0:
        return ComponentSet(labels=np.zeros_like(raw), components=[])

    # scipy's ids already follow raster order of first occurrence, but we
    # re-derive the order explicitly rather than rely on that detail.
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    nonzero = ids != 0
    order = np.argsort(first[nonzero])
    old_ids = ids[nonzero][order]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[old_ids] = np.arange(1, len(old_ids) + 1)
    labels = remap[raw]

    components = []
    slices = ndimage.find_objects(labels)
    for new_id, slc in enumerate(slices, start=1):
        ys, xs = np.nonzero(labels[slc] == new_id)
        ys = ys + slc[0].start
        xs = xs + slc[1].start
        bbox = BoundingBox(
            int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)
        )
        components.append(
            Component(
                id=new_id,
                pixel_count=len(xs),
                bbox=bbox,
                centroid=(float(xs.mean()), float(ys.mean())),
            )
        )
    return ComponentSet(labels=labels, components=components)


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def read_png(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def write_png(img: RgbImage, path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def read_mask_png(path) -> BinaryMask:
    with Image.open(path) as im:
        return BinaryMask(np.asarray(im.convert("L")) >= 128)


def write_mask_png(mask: BinaryMask, path) -> None:
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )
