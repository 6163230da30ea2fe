"""Dataset ingestion, annotation parsing and persistence.

All formats are JSON / JSON-lines with an explicit format_version tag;
JSON-schema documents for each format ship in appleyield/schemas/.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rle
from .detect import ColorModel, Detection
from .errors import FormatError, ValidationError
from .imaging import BinaryMask, BoundingBox
from .yieldmap import (
    Box3,
    ClusterTrack,
    OverlapRecord,
    SideModel,
    TrackObservation,
    YieldReport,
)

FORMAT_VERSION = 1


def _load_json(path):
    path = Path(path)
    if not path.exists():
        raise FormatError("file not found", path=str(path))
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed JSON: {e.msg}", path=str(path), line=e.lineno) from e


def _check_version(doc: dict, path) -> None:
    v = doc.get("format_version")
    if v != FORMAT_VERSION:
        raise FormatError(f"incompatible format_version {v!r}", path=str(path))


def _dump_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    frames: list[tuple[str, Path]]  # ordered (frame id, image path)
    side: str = "single"
    annotations: Path | None = None
    harvested: int | None = None

    def frame_ids(self) -> list[str]:
        return [fid for fid, _ in self.frames]


@dataclass(frozen=True)
class PolygonAnnotation:
    frame_id: str
    polygons: list[list[tuple[float, float]]]


@dataclass(frozen=True)
class BoxAnnotation:
    frame_id: str
    boxes: list[BoundingBox]


def load_manifest(path) -> DatasetManifest:
    doc = _load_json(path)
    _check_version(doc, path)
    root = Path(path).parent
    frames = []
    seen = set()
    for entry in doc.get("frames", []):
        fid = entry["id"]
        if fid in seen:
            raise FormatError(f"duplicate frame id {fid!r}", path=str(path))
        seen.add(fid)
        fpath = root / entry["path"]
        if not fpath.exists():
            raise FormatError(f"frame path {entry['path']!r} not resolvable", path=str(path))
        frames.append((fid, fpath))
    side = doc.get("side", "single")
    if side not in ("front", "back", "single"):
        raise FormatError(f"invalid side {side!r}", path=str(path))
    harvested = doc.get("harvested")
    if harvested is not None and (not isinstance(harvested, int) or harvested < 0):
        raise FormatError("harvested must be a non-negative integer", path=str(path))
    ann = doc.get("annotations")
    return DatasetManifest(
        dataset_id=doc["dataset_id"],
        frames=frames,
        side=side,
        annotations=root / ann if ann else None,
        harvested=harvested,
    )


def load_polygon_annotations(path) -> tuple[list[PolygonAnnotation], list[str]]:
    """Parse VGG Image Annotator JSON; accepts both the regions-as-list
    and regions-as-map dialects. Degenerate (<3 vertex) shapes are dropped
    and reported in the warning list."""
    doc = _load_json(path)
    out, warnings = [], []
    for key, entry in doc.items():
        if key == "format_version":
            continue
        frame_id = entry.get("filename", key)
        regions = entry.get("regions", [])
        if isinstance(regions, dict):
            regions = [regions[k] for k in sorted(regions)]
        polys = []
        for region in regions:
            shape = region.get("shape_attributes", {})
            if shape.get("name") not in (None, "polygon", "polyline"):
                continue
            xs = shape.get("all_points_x", [])
            ys = shape.get("all_points_y", [])
            if len(xs) != len(ys) or len(xs) < 3:
                warnings.append(f"{frame_id}: degenerate polygon with {len(xs)} vertices")
                continue
            polys.append(list(zip(map(float, xs), map(float, ys))))
        out.append(PolygonAnnotation(frame_id=frame_id, polygons=polys))
    return out, warnings


def polygon_to_bbox(polygon: list[tuple[float, float]]) -> BoundingBox:
    """Tight axis-aligned hull of the polygon vertices."""
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    x0, y0 = int(np.floor(min(xs))), int(np.floor(min(ys)))
    x1, y1 = int(np.ceil(max(xs))), int(np.ceil(max(ys)))
    return BoundingBox(x0, y0, max(1, x1 - x0), max(1, y1 - y0))


def rasterize_polygon(polygon: list[tuple[float, float]], width: int, height: int) -> BinaryMask:
    """Fill by sampling at pixel centers, so the mask area tracks the
    polygon's geometric area rather than its outline."""
    from matplotlib.path import Path as MplPath

    if len(polygon) < 3:
        raise ValidationError("polygon needs at least 3 vertices")
    ys, xs = np.mgrid[0:height, 0:width]
    centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    inside = MplPath(polygon).contains_points(centers)
    return BinaryMask(inside.reshape(height, width))


def load_bbox_annotations(path, frame_sizes: dict[str, tuple[int, int]] | None = None) -> list[BoxAnnotation]:
    """Load sparse ground-truth boxes; only annotated frames are present.

    frame_sizes maps frame id -> (width, height) for bounds validation.
    """
    doc = _load_json(path)
    _check_version(doc, path)
    out = []
    for entry in doc.get("frames", []):
        fid = entry["frame"]
        boxes = []
        for b in entry.get("boxes", []):
            box = BoundingBox(*map(int, b))
            if frame_sizes and fid in frame_sizes:
                w, h = frame_sizes[fid]
                if box.x < 0 or box.y < 0 or box.x2 > w or box.y2 > h:
                    raise ValidationError(f"box {b} exceeds frame {fid!r} ({w}x{h})")
            boxes.append(box)
        out.append(BoxAnnotation(frame_id=fid, boxes=boxes))
    return out


def save_bbox_annotations(annotations: list[BoxAnnotation], path) -> None:
    _dump_json(
        {
            "format_version": FORMAT_VERSION,
            "frames": [
                {"frame": a.frame_id, "boxes": [b.to_list() for b in a.boxes]}
                for a in annotations
            ],
        },
        path,
    )


def save_color_model(model: ColorModel, path) -> None:
    _dump_json({"format_version": FORMAT_VERSION, **model.to_dict()}, path)


def load_color_model(path) -> ColorModel:
    doc = _load_json(path)
    _check_version(doc, path)
    return ColorModel.from_dict(doc)


def write_detections(detections: list[Detection], path) -> None:
    with open(path, "w") as fh:
        for d in detections:
            fh.write(
                json.dumps(
                    {
                        "frame": d.frame_id,
                        "bbox": d.bbox.to_list(),
                        "area": d.apple_pixels,
                        "mask_rle": rle.encode(d.mask),
                    }
                )
                + "\n"
            )


def read_detections(path) -> list[Detection]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"malformed JSON line: {e.msg}", path=str(path), line=lineno) from e
            try:
                out.append(
                    Detection(
                        frame_id=rec["frame"],
                        bbox=BoundingBox(*rec["bbox"]),
                        mask=rle.decode(rec["mask_rle"]),
                        apple_pixels=rec["area"],
                    )
                )
            except KeyError as e:
                raise FormatError(f"missing field {e}", path=str(path), line=lineno) from e
    return out


def _track_to_dict(t: ClusterTrack) -> dict:
    return {
        "id": t.cluster_id,
        "extent": {"lo": list(t.extent.lo), "hi": list(t.extent.hi)},
        "on_ground": t.on_ground,
        "background": t.background,
        "count": t.count,
        "observations": [
            {
                "frame": o.frame_id,
                "area": o.area,
                "bbox": o.bbox.to_list() if o.bbox else None,
                "external_ref": o.external_ref,
            }
            for o in t.observations
        ],
    }


def _track_from_dict(d: dict) -> ClusterTrack:
    return ClusterTrack(
        cluster_id=d["id"],
        extent=Box3(tuple(d["extent"]["lo"]), tuple(d["extent"]["hi"])),
        on_ground=d.get("on_ground", False),
        background=d.get("background", False),
        count=d.get("count"),
        observations=[
            TrackObservation(
                frame_id=o["frame"],
                area=o["area"],
                bbox=BoundingBox(*o["bbox"]) if o.get("bbox") else None,
                external_ref=o.get("external_ref"),
            )
            for o in d["observations"]
        ],
    )


def write_side_model(side: SideModel, overlaps: list[OverlapRecord], path) -> None:
    _dump_json(
        {
            "format_version": FORMAT_VERSION,
            "side": side.side,
            "tracks": [_track_to_dict(t) for t in side.tracks],
            "overlaps": [
                {"front": o.front_id, "back": o.back_id, "volume": o.volume}
                for o in overlaps
            ],
        },
        path,
    )


def read_side_model(path) -> tuple[SideModel, list[OverlapRecord]]:
    doc = _load_json(path)
    _check_version(doc, path)
    side = SideModel(side=doc["side"], tracks=[_track_from_dict(t) for t in doc["tracks"]])
    overlaps = [
        OverlapRecord(front_id=o["front"], back_id=o["back"], volume=o["volume"])
        for o in doc.get("overlaps", [])
    ]
    return side, overlaps


def render_yield_table(reports: list[YieldReport]) -> str:
    """Plain-text yield summary: harvested vs merged vs single-side sums."""
    header = f"{'Dataset':<12} {'Harvested':>10} {'Merged':>18} {'Single-side sum':>20}"
    lines = [header, "-" * len(header)]
    for r in reports:
        if r.harvested:
            merged = f"{r.merged_total} ({r.accuracy:.2f}%)"
            ss = f"{r.single_side_sum} ({yield_pct(r.single_side_sum, r.harvested):.2f}%)"
            harvested = str(r.harvested)
        else:
            merged = str(r.merged_total)
            ss = str(r.single_side_sum)
            harvested = "-"
        lines.append(f"{r.dataset_id:<12} {harvested:>10} {merged:>18} {ss:>20}")
    return "\n".join(lines) + "\n"


def yield_pct(estimated: int, harvested: int) -> float:
    return round(estimated / harvested * 100.0, 2)


def write_report(reports: list[YieldReport], json_path, text_path=None) -> None:
    _dump_json(
        {"format_version": FORMAT_VERSION, "reports": [r.to_dict() for r in reports]},
        json_path,
    )
    if text_path is not None:
        with open(text_path, "w") as fh:
            fh.write(render_yield_table(reports))
