"""Benchmark of the SLIC assignment kernel: compiled extension vs the
pure-numpy fallback.

Run with: python3 benchmarks/bench_slic.py
Both backends produce bit-identical labels; this only measures speed.
"""

import time

import numpy as np
from scipy.ndimage import gaussian_filter

from appleyield.imaging import LabImage
from appleyield.slic import SlicConfig, slic_segment
from appleyield.slic._assign_np import assign_step as assign_np

try:
    from appleyield.slic._assign_cy import assign_step as assign_cy
except ImportError:
    assign_cy = None


def make_frame(h: int, w: int, seed: int = 0) -> LabImage:
    rng = np.random.default_rng(seed)
    lab = gaussian_filter(rng.uniform(0, 100, (h, w, 3)), sigma=(4, 4, 0))
    return LabImage(lab)


def setup(img: LabImage, target: int):
    lab = np.ascontiguousarray(img.pixels)
    h, w = lab.shape[:2]
    n = h * w
    spacing = np.sqrt(n / target)
    nx = max(1, int(round(w / spacing)))
    ny = max(1, int(round(h / spacing)))
    xs = (np.arange(nx) + 0.5) * (w / nx)
    ys = (np.arange(ny) + 0.5) * (h / ny)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    seeds = np.column_stack([gx.ravel(), gy.ravel()])
    sxi = np.clip(np.round(seeds[:, 0]).astype(int), 0, w - 1)
    syi = np.clip(np.round(seeds[:, 1]).astype(int), 0, h - 1)
    centers = np.column_stack([lab[syi, sxi], seeds])
    weight = (10.0 / spacing) ** 2
    return lab, centers, spacing, weight


def time_kernel(kernel, lab, centers, spacing, weight, repeats: int = 5) -> float:
    h, w = lab.shape[:2]
    labels = np.empty((h, w), dtype=np.int32)
    dists = np.empty((h, w), dtype=np.float64)
    kernel(lab, centers, spacing, weight, labels, dists)  # warm-up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernel(lab, centers, spacing, weight, labels, dists)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    cases = [(120, 160, 100), (240, 320, 400), (480, 640, 1200)]
    print(f"{'frame':>10} {'centers':>8} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for h, w, target in cases:
        img = make_frame(h, w)
        lab, centers, spacing, weight = setup(img, target)
        t_np = time_kernel(assign_np, lab, centers, spacing, weight)
        if assign_cy is None:
            print(f"{h}x{w:>5} {centers.shape[0]:>8} {t_np * 1e3:>12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_cy = time_kernel(assign_cy, lab, centers, spacing, weight)
        labels_np = np.empty((h, w), dtype=np.int32)
        dists_np = np.empty((h, w), dtype=np.float64)
        labels_cy = np.empty((h, w), dtype=np.int32)
        dists_cy = np.empty((h, w), dtype=np.float64)
        assign_np(lab, centers, spacing, weight, labels_np, dists_np)
        assign_cy(lab, centers, spacing, weight, labels_cy, dists_cy)
        assert np.array_equal(labels_np, labels_cy), "backend labels diverge"
        print(
            f"{h}x{w:>5} {centers.shape[0]:>8} {t_np * 1e3:>12.2f} "
            f"{t_cy * 1e3:>12.2f} {t_np / t_cy:>7.1f}x"
        )

    img = make_frame(240, 320)
    t0 = time.perf_counter()
    result = slic_segment(img, SlicConfig(target_count=400))
    total = time.perf_counter() - t0
    print(f"\nfull slic_segment 240x320 target 400: {total * 1e3:.1f} ms, "
          f"{len(result.superpixels)} superpixels")


if __name__ == "__main__":
    main()
