"""Command line entry points.

Every run logs its configuration and seed to stderr so results can be
replayed; pipeline failures exit 1 with a typed message, usage errors
exit 2 (click's default).
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import data_io, detect, evaluation, pipeline
from .count import ClusterPatch, CountConfig, count_cluster, ingest_external_counts
from .errors import AppleYieldError
from .imaging import write_png
from .mixture import EmConfig
from .slic import BACKEND, SlicConfig
from .yieldmap import (
    SceneParams,
    YieldReport,
    filter_ground_and_background,
    merge_sides,
    resolve_counts,
    simulate_scene,
)

log = logging.getLogger("appleyield")


def _log_run(command: str, **params) -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    log.info("appleyield %s backend=%s config=%s", command, BACKEND, json.dumps(params, default=str))


def _pipeline_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AppleYieldError as e:
            click.echo(f"error ({type(e).__name__}): {e}", err=True)
            sys.exit(1)

    return wrapper


def _detect_config(color_classes, kl_threshold, min_area, superpixels, seed) -> detect.DetectConfig:
    return detect.DetectConfig(
        color_classes=color_classes,
        kl_threshold=kl_threshold,
        min_area=min_area,
        slic=SlicConfig(target_count=superpixels),
        em=EmConfig(rng_seed=seed),
    )


@click.group()
@click.version_option()
def main():
    """Apple orchard yield estimation pipeline."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@_pipeline_errors
def ingest(manifest_path):
    """Validate a dataset manifest and its annotations."""
    _log_run("ingest", manifest=manifest_path)
    m = data_io.load_manifest(manifest_path)
    click.echo(f"dataset {m.dataset_id}: {len(m.frames)} frames, side={m.side}")
    if m.annotations:
        anns, warnings = data_io.load_polygon_annotations(m.annotations)
        click.echo(f"annotations: {sum(len(a.polygons) for a in anns)} polygons over {len(anns)} frames")
        for w in warnings:
            click.echo(f"warning: {w}", err=True)
    if m.harvested is not None:
        click.echo(f"harvested: {m.harvested}")


@main.command("train-color-model")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--clicks", "clicks_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--color-classes", default=25, show_default=True)
@click.option("--superpixels", type=int, default=None, help="Superpixel target; default adapts to frame size.")
@click.option("--frame-limit", default=5, show_default=True, help="Frames pooled for training.")
@click.option("--seed", default=0, show_default=True)
@_pipeline_errors
def train_color_model(manifest_path, clicks_path, out_path, color_classes, superpixels, frame_limit, seed):
    """Replay a click file into a supervised color model."""
    _log_run(
        "train-color-model",
        manifest=manifest_path,
        clicks=clicks_path,
        color_classes=color_classes,
        superpixels=superpixels,
        frame_limit=frame_limit,
        seed=seed,
    )
    manifest = data_io.load_manifest(manifest_path)
    clicks = pipeline.load_click_file(clicks_path)
    cfg = _detect_config(color_classes, 20.0, 20, superpixels, seed)
    frames = pipeline.lab_frames(manifest, limit=frame_limit)
    model, session = pipeline.train_color_model(frames, clicks, cfg, provenance="user-supervised")
    data_io.save_color_model(model, out_path)
    apple = sum(1 for l in model.labels if l == detect.APPLE)
    click.echo(f"model written to {out_path}: {model.mixture.k} components, {apple} apple")


@main.command("detect")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--masks-dir", type=click.Path(), default=None, help="Optional per-frame mask PNGs.")
@click.option("--kl-threshold", default=20.0, show_default=True)
@click.option("--min-area", default=20, show_default=True)
@click.option("--superpixels", type=int, default=None, help="Superpixel target; default adapts to frame size.")
@click.option("--seed", default=0, show_default=True)
@_pipeline_errors
def detect_cmd(manifest_path, model_path, out_path, masks_dir, kl_threshold, min_area, superpixels, seed):
    """Segment apples in every manifest frame."""
    _log_run(
        "detect",
        manifest=manifest_path,
        model=model_path,
        kl_threshold=kl_threshold,
        min_area=min_area,
        superpixels=superpixels,
        seed=seed,
    )
    manifest = data_io.load_manifest(manifest_path)
    model = data_io.load_color_model(model_path)
    cfg = _detect_config(model.mixture.k, kl_threshold, min_area, superpixels, seed)
    frames = pipeline.lab_frames(manifest)
    detections, masks = pipeline.detect_frames(frames, model, cfg)
    data_io.write_detections(detections, out_path)
    if masks_dir:
        mdir = Path(masks_dir)
        mdir.mkdir(parents=True, exist_ok=True)
        from .imaging import write_mask_png

        for fid, mask in masks.items():
            write_mask_png(mask, mdir / f"{fid}.png")
    click.echo(f"{len(detections)} detections over {len(frames)} frames -> {out_path}")


@main.command("count")
@click.option("--detections", "det_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--min-count-area", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_pipeline_errors
def count_cmd(det_path, out_path, min_count_area, seed):
    """Count fruits per detected cluster patch (0..6 each)."""
    _log_run("count", detections=det_path, min_count_area=min_count_area, seed=seed)
    cfg = CountConfig(min_count_area=min_count_area, em=EmConfig(max_iterations=60, rng_seed=seed))
    detections = data_io.read_detections(det_path)
    per_frame: dict[str, int] = {}
    with open(out_path, "w") as fh:
        for d in detections:
            idx = per_frame.get(d.frame_id, 0)
            per_frame[d.frame_id] = idx + 1
            patch = ClusterPatch(frame_id=d.frame_id, bbox=d.bbox, mask=d.mask)
            result = count_cluster(patch, cfg)
            fh.write(json.dumps({"cluster_id": f"{d.frame_id}:{idx}", "count": result.count}) + "\n")
    click.echo(f"{len(detections)} patches counted -> {out_path}")


@main.command("evaluate")
@click.option("--detections", "det_path", required=True, type=click.Path(exists=True))
@click.option("--ground-truth", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--dataset-id", default="dataset", show_default=True)
@_pipeline_errors
def evaluate_cmd(det_path, gt_path, out_dir, dataset_id):
    """Precision/recall/F1 over the IoU grid against ground-truth boxes."""
    _log_run("evaluate", detections=det_path, ground_truth=gt_path, dataset=dataset_id)
    detections = data_io.read_detections(det_path)
    gt = data_io.load_bbox_annotations(gt_path)
    det_by_frame: dict[str, list] = {}
    for d in detections:
        det_by_frame.setdefault(d.frame_id, []).append(d.bbox)
    frame_ids = sorted(set(det_by_frame) | {a.frame_id for a in gt})
    gt_by_frame = {a.frame_id: a.boxes for a in gt}
    pairs = [(det_by_frame.get(f, []), gt_by_frame.get(f, [])) for f in frame_ids]
    curve = evaluation.metrics_over_iou_grid(pairs, dataset_id=dataset_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_curve_csv(curve, out / "curve.csv")
    for metric in ("precision", "recall", "f1"):
        evaluation.plot_curves([curve], metric, out / f"{metric}.svg")
    mid = curve.points[49]
    click.echo(
        f"IoU 0.50: precision={mid.precision:.4f} recall={mid.recall:.4f} f1={mid.f1:.4f} -> {out}"
    )


@main.command("yield")
@click.option("--front", "front_path", required=True, type=click.Path(exists=True))
@click.option("--back", "back_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--dataset-id", default="dataset", show_default=True)
@click.option("--harvested", type=int, default=None)
@click.option("--external-counts", "counts_path", type=click.Path(exists=True), default=None)
@_pipeline_errors
def yield_cmd(front_path, back_path, out_dir, dataset_id, harvested, counts_path):
    """Merge two row-side models into a yield estimate."""
    _log_run(
        "yield",
        front=front_path,
        back=back_path,
        dataset=dataset_id,
        harvested=harvested,
        external_counts=counts_path,
    )
    front, overlaps = data_io.read_side_model(front_path)
    back, back_overlaps = data_io.read_side_model(back_path)
    overlaps = overlaps or back_overlaps

    from dataclasses import replace

    front = replace(front, tracks=filter_ground_and_background(front.tracks))
    back = replace(back, tracks=filter_ground_and_background(back.tracks))
    kept = {o for o in overlaps}
    fids = {t.cluster_id for t in front.tracks}
    bids = {t.cluster_id for t in back.tracks}
    overlaps = [o for o in kept if o.front_id in fids and o.back_id in bids]
    overlaps.sort(key=lambda o: (o.front_id, o.back_id))

    if counts_path:
        known = fids | bids
        counts = ingest_external_counts(counts_path, known)
        front = resolve_counts(front, pipeline.external_counter(counts, front))
        back = resolve_counts(back, pipeline.external_counter(counts, back))

    merged = merge_sides(front, back, overlaps)
    report = YieldReport(
        dataset_id=dataset_id,
        front_sum=front.total_count(),
        back_sum=back.total_count(),
        merged_total=merged,
        harvested=harvested,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_report([report], out / "report.json", out / "report.txt")
    click.echo(data_io.render_yield_table([report]), nl=False)


@main.command("simulate")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--trees", default=8, show_default=True)
@click.option("--fruits-per-tree", default=4, show_default=True)
@click.option("--visibility", default=0.5, show_default=True, help="Both-side visible fraction.")
@click.option("--occlusion", default=0.0, show_default=True)
@click.option("--render/--no-render", default=False, show_default=True)
@click.option("--frame-size", default=192, show_default=True)
@_pipeline_errors
def simulate_cmd(seed, out_dir, trees, fruits_per_tree, visibility, occlusion, render, frame_size):
    """Generate a deterministic synthetic orchard scene."""
    _log_run(
        "simulate",
        seed=seed,
        trees=trees,
        fruits_per_tree=fruits_per_tree,
        visibility=visibility,
        occlusion=occlusion,
        render=render,
        frame_size=frame_size,
    )
    params = SceneParams(
        tree_count=trees,
        fruits_per_tree=fruits_per_tree,
        both_side_visibility=visibility,
        occlusion_rate=occlusion,
        render=render,
        frame_size=frame_size,
    )
    scene = simulate_scene(seed, params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_side_model(scene.front, scene.overlaps, out / "front.json")
    data_io.write_side_model(scene.back, [], out / "back.json")
    with open(out / "scene.json", "w") as fh:
        json.dump(
            {
                "format_version": data_io.FORMAT_VERSION,
                "seed": seed,
                "ground_truth": scene.ground_truth,
                "params": {
                    "tree_count": trees,
                    "fruits_per_tree": fruits_per_tree,
                    "both_side_visibility": visibility,
                    "occlusion_rate": occlusion,
                },
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    if render:
        fdir = out / "frames"
        fdir.mkdir(exist_ok=True)
        for fid in sorted(scene.frames):
            write_png(scene.frames[fid], fdir / f"{fid}.png")
    click.echo(
        f"scene with {scene.ground_truth} fruits: {len(scene.front.tracks)} front / "
        f"{len(scene.back.tracks)} back tracks, {len(scene.overlaps)} overlaps -> {out}"
    )


@main.command("serve")
@click.option("--data-root", envvar="APPLEYIELD_DATA_ROOT", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@_pipeline_errors
def serve_cmd(data_root, host, port):
    """Run the supervision HTTP service."""
    _log_run("serve", data_root=data_root, host=host, port=port)
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(Path(data_root)), host=host, port=port)


if __name__ == "__main__":
    main()
