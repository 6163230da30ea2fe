"""Detection and counting evaluation: IoU-matched TP/FP/FN, precision/
recall/F1 over the 99-point IoU grid, counting accuracy and confusion
matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imaging import BoundingBox, bbox_iou

IOU_GRID = [round(0.01 * i, 2) for i in range(1, 100)]


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    matches: list[tuple[int, int, float]] = field(default_factory=list)  # (det, gt, IoU)


@dataclass(frozen=True)
class MetricsPoint:
    iou_threshold: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsCurve:
    dataset_id: str
    points: list[MetricsPoint]

    def __post_init__(self):
        if len(self.points) != len(IOU_GRID):
            raise ValidationError(f"curve must have {len(IOU_GRID)} points")


@dataclass(frozen=True)
class CountConfusion:
    matrix: np.ndarray  # 7x7, rows = true count, cols = predicted

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.shape != (7, 7) or (m < 0).any():
            raise ValidationError("confusion matrix must be 7x7 with counts >= 0")
        object.__setattr__(self, "matrix", m)

    @property
    def accuracy(self) -> float:
        total = self.matrix.sum()
        return float(np.trace(self.matrix) / total) if total else 0.0

    def false_positive_rejection_rate(self) -> float:
        """Diagonal fraction of the true-count-0 row: how often empty
        patches are correctly rejected."""
        row = self.matrix[0]
        return float(row[0] / row.sum()) if row.sum() else 0.0


def match_detections(
    dets: list[BoundingBox], gts: list[BoundingBox], iou_threshold: float
) -> MatchResult:
    """Greedy one-to-one matching over (det, gt) pairs by descending IoU."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValidationError("iou_threshold must lie in (0, 1)")
    pairs = []
    for di, d in enumerate(dets):
        for gi, g in enumerate(gts):
            iou = bbox_iou(d, g)
            if iou >= iou_threshold:
                pairs.append((iou, di, gi))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_d, used_g = set(), set()
    matches = []
    for iou, di, gi in pairs:
        if di in used_d or gi in used_g:
            continue
        used_d.add(di)
        used_g.add(gi)
        matches.append((di, gi, iou))
    tp = len(matches)
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp, matches=matches)


def metrics_point(m: MatchResult, iou_threshold: float = 0.5) -> MetricsPoint:
    """Precision/recall/F1 with 0/0 cases resolving to 0."""
    precision = m.tp / (m.tp + m.fp) if (m.tp + m.fp) else 0.0
    recall = m.tp / (m.tp + m.fn) if (m.tp + m.fn) else 0.0
    f1 = (
        2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    )
    return MetricsPoint(iou_threshold, precision, recall, f1)


def metrics_over_iou_grid(
    frames: list[tuple[list[BoundingBox], list[BoundingBox]]], dataset_id: str = ""
) -> MetricsCurve:
    """Per-frame metrics at each of the 99 IoU thresholds, averaged across
    frames. Frames with no ground-truth boxes contribute to precision and
    F1 averages but are excluded from recall averaging."""
    if not frames:
        raise ValidationError("at least one frame required")
    points = []
    for thr in IOU_GRID:
        ps, rs, fs = [], [], []
        for dets, gts in frames:
            mp = metrics_point(match_detections(dets, gts, thr), thr)
            ps.append(mp.precision)
            fs.append(mp.f1)
            if gts:
                rs.append(mp.recall)
        points.append(
            MetricsPoint(
                iou_threshold=thr,
                precision=float(np.mean(ps)),
                recall=float(np.mean(rs)) if rs else 0.0,
                f1=float(np.mean(fs)),
            )
        )
    return MetricsCurve(dataset_id=dataset_id, points=points)


def counting_confusion(pred: list[int], truth: list[int]) -> CountConfusion:
    if len(pred) != len(truth):
        raise ValidationError(f"length mismatch: {len(pred)} vs {len(truth)}")
    m = np.zeros((7, 7), dtype=np.int64)
    for p, t in zip(pred, truth):
        if not (0 <= p <= 6 and 0 <= t <= 6):
            raise ValidationError(f"counts must lie in [0, 6], got ({t}, {p})")
        m[t, p] += 1
    return CountConfusion(m)


def write_curve_csv(curve: MetricsCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iou", "precision", "recall", "f1"])
        for p in curve.points:
            writer.writerow([p.iou_threshold, p.precision, p.recall, p.f1])


def write_confusion_csv(conf: CountConfusion, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(range(7)))
        for t in range(7):
            writer.writerow([t] + conf.matrix[t].tolist())


def plot_curves(curves: list[MetricsCurve], metric: str, path) -> None:
    """Panel-per-dataset SVG plot of one metric over the IoU grid
    (7 panels when 7 datasets are supplied)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if metric not in ("precision", "recall", "f1"):
        raise ValidationError(f"unknown metric {metric!r}")
    n = len(curves)
    cols = min(4, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3.2 * rows), squeeze=False)
    for i, curve in enumerate(curves):
        ax = axes[i // cols][i % cols]
        xs = [p.iou_threshold for p in curve.points]
        ys = [getattr(p, metric) for p in curve.points]
        ax.plot(xs, ys)
        ax.set_title(curve.dataset_id or f"dataset {i + 1}")
        ax.set_xlabel("IoU")
        ax.set_ylabel(metric)
        ax.set_ylim(-0.02, 1.02)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
