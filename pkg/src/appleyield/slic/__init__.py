"""SLIC superpixel over-segmentation of LAB frames.

The per-pixel assignment sweep dominates runtime, so it lives in a
compiled extension (``_assign_cy``) with a numpy fallback selected at
import time. Everything else (grid seeding, center updates, connectivity
enforcement, statistics) is shared numpy code, so the backend choice
cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ValidationError
from ..imaging import BoundingBox, LabImage

try:
    from ._assign_cy import assign_step

    BACKEND = "cython"
except ImportError:  # extension not built; pure-python lane
    from ._assign_np import assign_step

    BACKEND = "numpy"

_STRUCT4 = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SlicConfig:
    # None picks a frame-size-dependent target (about 100 px per
    # superpixel, capped at 2000 for HD frames)
    target_count: int | None = None
    compactness: float = 10.0
    iterations: int = 10
    seed_perturbation: bool = True

    def __post_init__(self):
        if self.target_count is not None and self.target_count < 1:
            raise ValidationError("target_count must be >= 1")
        if self.compactness <= 0 or self.iterations < 1:
            raise ValidationError("invalid SLIC configuration")

    def resolved_target(self, n_pixels: int) -> int:
        if self.target_count is not None:
            return self.target_count
        return max(16, min(2000, n_pixels // 100))


@dataclass(frozen=True)
class Superpixel:
    id: int
    pixel_count: int
    mean_lab: np.ndarray  # 3-vector
    centroid: tuple[float, float]  # (x, y)
    bbox: BoundingBox


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray  # (H, W) int32, dense ids starting at 0
    superpixels: list[Superpixel]


def _grid_seeds(h: int, w: int, spacing: float) -> np.ndarray:
    nx = max(1, int(round(w / spacing)))
    ny = max(1, int(round(h / spacing)))
    xs = (np.arange(nx) + 0.5) * (w / nx)
    ys = (np.arange(ny) + 0.5) * (h / ny)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _perturb_to_low_gradient(lab: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    grad = np.zeros(lab.shape[:2])
    gx = np.diff(lab, axis=1)
    gy = np.diff(lab, axis=0)
    grad[:, :-1] += (gx**2).sum(axis=2)
    grad[:-1, :] += (gy**2).sum(axis=2)
    out = seeds.copy()
    h, w = grad.shape
    for i, (x, y) in enumerate(seeds):
        cx, cy = int(round(x)), int(round(y))
        x0, x1 = max(cx - 1, 0), min(cx + 2, w)
        y0, y1 = max(cy - 1, 0), min(cy + 2, h)
        window = grad[y0:y1, x0:x1]
        dy, dx = np.unravel_index(np.argmin(window), window.shape)
        out[i] = (x0 + dx, y0 + dy)
    return out


def _same_label_fragments(labels: np.ndarray) -> np.ndarray:
    """4-connected fragments of constant label, one id per pixel."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols = [], []
    right = labels[:, :-1] == labels[:, 1:]
    rows.append(idx[:, :-1][right])
    cols.append(idx[:, 1:][right])
    down = labels[:-1, :] == labels[1:, :]
    rows.append(idx[:-1, :][down])
    cols.append(idx[1:, :][down])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(h * w, h * w))
    _, frag = cc(graph, directed=False)
    return frag.reshape(h, w).astype(np.int64)


def _enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Fragments >= min_size become superpixels of their own; smaller
    orphan fragments are absorbed into an adjacent surviving superpixel."""
    h, w = labels.shape
    frag = _same_label_fragments(labels)
    nfrag = int(frag.max()) + 1
    sizes = np.bincount(frag.ravel(), minlength=nfrag)

    kept = sizes >= max(1, min_size)
    if not kept.any():
        kept[np.argmax(sizes)] = True

    # fragment adjacency edges from 4-neighbor pixel pairs
    fa = np.concatenate([frag[:, :-1].ravel(), frag[:-1, :].ravel()])
    fb = np.concatenate([frag[:, 1:].ravel(), frag[1:, :].ravel()])
    diff = fa != fb
    edges = np.unique(np.sort(np.column_stack([fa[diff], fb[diff]]), axis=1), axis=0)

    # absorb whole fragments: each unassigned fragment joins the lowest-id
    # assigned neighbor fragment; repeat until everything is assigned
    owner = np.where(kept, np.arange(nfrag), -1)
    while (owner == -1).any():
        a, b = edges[:, 0], edges[:, 1]
        progressed = False
        for src, dst in ((a, b), (b, a)):
            open_edge = (owner[dst] == -1) & (owner[src] != -1)
            if open_edge.any():
                cand = np.full(nfrag, np.iinfo(np.int64).max)
                np.minimum.at(cand, dst[open_edge], owner[src][open_edge])
                hit = cand < np.iinfo(np.int64).max
                owner[hit & (owner == -1)] = cand[hit & (owner == -1)]
                progressed = True
        if not progressed:
            raise AssertionError("connectivity enforcement failed to converge")

    final = owner[frag]
    # dense relabel in raster order of first pixel
    ids, first = np.unique(final.ravel(), return_index=True)
    order = np.argsort(first)
    remap = np.empty(ids.max() + 1, dtype=np.int32)
    remap[ids[order]] = np.arange(len(ids), dtype=np.int32)
    return remap[final]


def superpixel_stats(img: LabImage, labels: np.ndarray) -> list[Superpixel]:
    """Per-superpixel pixel count, mean LAB color, centroid and bbox.

    Ids with zero pixels are excluded.
    """
    lab = img.pixels
    flat = labels.ravel()
    nmax = int(flat.max()) + 1
    counts = np.bincount(flat, minlength=nmax)
    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    out = []
    sums = np.stack(
        [np.bincount(flat, weights=lab[..., c].ravel(), minlength=nmax) for c in range(3)],
        axis=1,
    )
    sx = np.bincount(flat, weights=xs.ravel().astype(float), minlength=nmax)
    sy = np.bincount(flat, weights=ys.ravel().astype(float), minlength=nmax)
    slices = ndimage.find_objects(labels + 1)
    for sp in range(nmax):
        if counts[sp] == 0:
            continue
        slc = slices[sp]
        bbox = BoundingBox(
            slc[1].start, slc[0].start, slc[1].stop - slc[1].start, slc[0].stop - slc[0].start
        )
        out.append(
            Superpixel(
                id=sp,
                pixel_count=int(counts[sp]),
                mean_lab=sums[sp] / counts[sp],
                centroid=(sx[sp] / counts[sp], sy[sp] / counts[sp]),
                bbox=bbox,
            )
        )
    return out


def slic_segment(img: LabImage, cfg: SlicConfig = SlicConfig()) -> SuperpixelMap:
    """k-means-style clustering in (L, a, b, x, y) with grid-initialized
    centers, followed by connectivity enforcement."""
    lab = np.ascontiguousarray(img.pixels)
    h, w = lab.shape[:2]
    n = h * w
    target = cfg.resolved_target(n)
    if target > n:
        raise ValidationError(f"target_count {target} exceeds pixel count {n}")

    spacing = np.sqrt(n / target)
    seeds = _grid_seeds(h, w, spacing)
    if cfg.seed_perturbation:
        seeds = _perturb_to_low_gradient(lab, seeds)

    sxi = np.clip(np.round(seeds[:, 0]).astype(int), 0, w - 1)
    syi = np.clip(np.round(seeds[:, 1]).astype(int), 0, h - 1)
    centers = np.column_stack([lab[syi, sxi], seeds])  # (k, 5): L,a,b,x,y

    labels = np.empty((h, w), dtype=np.int32)
    dists = np.empty((h, w), dtype=np.float64)
    spatial_weight = (cfg.compactness / spacing) ** 2
    flat_lab = lab.reshape(-1, 3)
    ys, xs = np.mgrid[0:h, 0:w]
    xflat = xs.ravel().astype(float)
    yflat = ys.ravel().astype(float)

    for _ in range(cfg.iterations):
        assign_step(lab, centers, spacing, spatial_weight, labels, dists)
        missed = labels == -1  # farther than the search window from every center
        if missed.any():
            my, mx = np.nonzero(missed)
            d2 = (mx[:, None] - centers[None, :, 3]) ** 2 + (
                my[:, None] - centers[None, :, 4]
            ) ** 2
            labels[my, mx] = np.argmin(d2, axis=1).astype(np.int32)
        flat = labels.ravel()
        k = centers.shape[0]
        counts = np.bincount(flat, minlength=k).astype(float)
        nonempty = counts > 0
        for c in range(3):
            s = np.bincount(flat, weights=flat_lab[:, c], minlength=k)
            centers[nonempty, c] = s[nonempty] / counts[nonempty]
        centers[nonempty, 3] = (
            np.bincount(flat, weights=xflat, minlength=k)[nonempty] / counts[nonempty]
        )
        centers[nonempty, 4] = (
            np.bincount(flat, weights=yflat, minlength=k)[nonempty] / counts[nonempty]
        )

    mean_size = n / max(1, len(np.unique(labels)))
    labels = _enforce_connectivity(labels, min_size=int(mean_size / 4))
    return SuperpixelMap(labels=labels, superpixels=superpixel_stats(img, labels))
