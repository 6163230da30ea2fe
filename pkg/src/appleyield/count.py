"""Per-cluster fruit counting: spatial Gaussian mixtures over segmented
apple pixels with BIC selection of the component count (0..6)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import mixture
from .errors import NotFoundError, ValidationError
from .imaging import BinaryMask, BoundingBox
from .mixture import EmConfig, Gaussian

MAX_COUNT = 6


@dataclass(frozen=True)
class CountConfig:
    min_count_area: int = 30  # below this, the patch counts as 0
    restarts: int = 3
    # uniform discs are not Gaussians: the likelihood gain of over-splitting
    # grows linearly in the sample count while the BIC penalty only grows
    # logarithmically, so large patches are subsampled before fitting
    max_points: int = 250
    em: EmConfig = EmConfig(max_iterations=60)


@dataclass(frozen=True)
class ClusterPatch:
    frame_id: str
    bbox: BoundingBox
    mask: BinaryMask  # cropped to bbox

    def __post_init__(self):
        if self.mask.height != self.bbox.h or self.mask.width != self.bbox.w:
            raise ValidationError("patch mask dimensions must match its bbox")

    def foreground_coords(self) -> np.ndarray:
        """(n, 2) array of (x, y) foreground coordinates within the bbox."""
        ys, xs = np.nonzero(self.mask.bits)
        return np.column_stack([xs, ys]).astype(np.float64)


@dataclass(frozen=True)
class CountResult:
    count: int
    fruit_models: list[Gaussian]
    selection_scores: dict[int, float] = field(default_factory=dict)  # k -> BIC

    def __post_init__(self):
        if self.count != len(self.fruit_models) or not 0 <= self.count <= MAX_COUNT:
            raise ValidationError("count must equal |fruit models| and lie in [0, 6]")


def _best_fit(points: np.ndarray, k: int, cfg: CountConfig):
    best = None
    for r in range(cfg.restarts):
        em = EmConfig(
            max_iterations=cfg.em.max_iterations,
            tolerance=cfg.em.tolerance,
            rng_seed=cfg.em.rng_seed + 7919 * r + k,
            covariance_floor=cfg.em.covariance_floor,
        )
        try:
            model, ll = mixture.fit_gmm(points, k, em)
        except mixture.NumericalError:
            continue
        if best is None or ll > best[1]:
            best = (model, ll)
    return best


def count_cluster(patch: ClusterPatch, cfg: CountConfig = CountConfig()) -> CountResult:
    """Fit mixtures for k = 1..6 over foreground pixel coordinates and keep
    the k minimizing BIC; fruit locations are the component means."""
    points = patch.foreground_coords()
    if len(points) < cfg.min_count_area:
        return CountResult(count=0, fruit_models=[], selection_scores={})
    if len(points) > cfg.max_points:
        rng = np.random.default_rng(cfg.em.rng_seed)
        points = points[rng.choice(len(points), size=cfg.max_points, replace=False)]

    scores: dict[int, float] = {}
    models: dict[int, mixture.MixtureModel] = {}
    for k in range(1, MAX_COUNT + 1):
        if len(points) < k:
            break
        fit = _best_fit(points, k, cfg)
        if fit is None:
            continue
        model, ll = fit
        scores[k] = mixture.bic(model, points, ll)
        models[k] = model

    best_k = min(scores, key=lambda k: (scores[k], k))
    return CountResult(
        count=best_k, fruit_models=list(models[best_k].components), selection_scores=scores
    )


def ingest_external_counts(path, known_cluster_ids) -> dict[str, int]:
    """Load externally produced per-cluster counts (JSON lines of
    {cluster_id, count}) so they can flow through aggregation/merging."""
    known = set(known_cluster_ids)
    out: dict[str, int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            cid, cnt = rec["cluster_id"], rec["count"]
            if cid not in known:
                raise NotFoundError(f"unknown cluster id {cid!r} at line {lineno}")
            if not isinstance(cnt, int) or not 0 <= cnt <= MAX_COUNT:
                raise ValidationError(f"count {cnt!r} out of [0, 6] at line {lineno}")
            out[cid] = cnt
    return out
