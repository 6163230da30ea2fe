"""End-to-end flows shared by the CLI and the HTTP service, so both
surfaces produce identical artifacts from identical inputs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import detect as det
from .count import ClusterPatch, CountConfig, count_cluster
from .data_io import DatasetManifest
from .errors import FormatError, ValidationError
from .imaging import BinaryMask, LabImage, RgbImage, read_png, rgb_to_lab
from .yieldmap import SideModel, resolve_counts


def load_click_file(path) -> list[dict]:
    with open(path) as fh:
        try:
            clicks = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"malformed JSON: {e.msg}", path=str(path), line=e.lineno) from e
    for c in clicks:
        if not {"frame", "x", "y", "label"} <= set(c):
            raise FormatError("click entries need frame/x/y/label", path=str(path))
    return clicks


def lab_frames(manifest: DatasetManifest, limit: int | None = None) -> dict[str, LabImage]:
    frames = manifest.frames[:limit] if limit else manifest.frames
    return {fid: rgb_to_lab(read_png(p)) for fid, p in frames}


def train_color_model(
    frames: dict[str, LabImage],
    clicks: list[dict],
    cfg: det.DetectConfig,
    provenance: str,
) -> tuple[det.ColorModel, det.SupervisionSession]:
    """Replay a click file through a supervision session and finalize."""
    session = det.start_session("training", frames, cfg)
    for c in clicks:
        component, _ = det.click_to_cluster(session, c["frame"], c["x"], c["y"])
        det.label_cluster(session, component, c["label"])
    return det.finalize_model(session, provenance=provenance), session


def detect_frames(
    frames: dict[str, LabImage], model: det.ColorModel, cfg: det.DetectConfig
) -> tuple[list[det.Detection], dict[str, BinaryMask]]:
    detections, masks = [], {}
    for fid, frame in frames.items():
        mask = det.classify_frame(frame, model, cfg)
        masks[fid] = mask
        detections.extend(det.detections_from_mask(mask, cfg.min_area, frame_id=fid))
    return detections, masks


def patch_counter(masks: dict[str, BinaryMask], cfg: CountConfig):
    """Observation counter backed by classified frame masks: crop the
    observation bbox out of the frame mask and count the patch."""

    def counter(obs) -> int:
        if obs.frame_id not in masks:
            raise ValidationError(f"no classified mask for frame {obs.frame_id!r}")
        if obs.bbox is None:
            raise ValidationError(f"observation in {obs.frame_id!r} has no patch bbox")
        b = obs.bbox
        crop = BinaryMask(masks[obs.frame_id].bits[b.y : b.y2, b.x : b.x2])
        patch = ClusterPatch(frame_id=obs.frame_id, bbox=b, mask=crop)
        return count_cluster(patch, cfg).count

    return counter


def external_counter(counts: dict[str, int], side: SideModel):
    """Observation counter resolving through an external-counts map keyed
    by cluster id (every observation of a track reports the same count)."""
    by_frame = {}
    for t in side.tracks:
        for o in t.observations:
            by_frame[o.frame_id] = t.cluster_id

    def counter(obs) -> int:
        cid = obs.external_ref or by_frame[obs.frame_id]
        if cid not in counts:
            raise ValidationError(f"no external count for cluster {cid!r}")
        return counts[cid]

    return counter


def count_scene_side(
    side: SideModel,
    frames: dict[str, RgbImage],
    model: det.ColorModel,
    detect_cfg: det.DetectConfig,
    count_cfg: CountConfig,
) -> SideModel:
    """Classify every observed frame of a side and resolve track counts
    via median-of-top-3 patch counting."""
    needed = {o.frame_id for t in side.tracks for o in t.observations}
    masks = {}
    for fid in sorted(needed):
        masks[fid] = det.classify_frame(rgb_to_lab(frames[fid]), model, detect_cfg)
    return resolve_counts(side, patch_counter(masks, count_cfg))
