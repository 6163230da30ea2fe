"""Semi-/user-supervised color-model detection pipeline.

Superpixel mean colors are clustered into ~25 classes; a human labels
clusters apple/background by clicking; frames are then classified by
matching per-frame color clusters to the model via KL divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mixture, slic
from .errors import AppleYieldError, NotFoundError, ValidationError
from .imaging import BinaryMask, BoundingBox, LabImage, connected_components
from .mixture import EmConfig, Gaussian, MixtureModel

APPLE = "apple"
BACKGROUND = "background"


@dataclass(frozen=True)
class DetectConfig:
    color_classes: int = 25  # configurable 10..50
    kl_threshold: float = 20.0
    min_area: int = 20
    slic: slic.SlicConfig = slic.SlicConfig()
    em: EmConfig = EmConfig()

    def __post_init__(self):
        if not 1 <= self.color_classes <= 50:
            raise ValidationError("color_classes must lie in [1, 50]")


@dataclass(frozen=True)
class ColorModel:
    mixture: MixtureModel
    labels: list[str]  # per component, APPLE or BACKGROUND
    provenance: str  # "user-supervised" or "semi-supervised"
    colorspace: str = "lab"

    def __post_init__(self):
        if len(self.labels) != self.mixture.k:
            raise ValidationError("one label per mixture component required")
        if not any(l == APPLE for l in self.labels):
            raise ValidationError("color model needs at least one apple component")

    def to_dict(self) -> dict:
        return {
            "mixture": self.mixture.to_dict(),
            "labels": list(self.labels),
            "provenance": self.provenance,
            "colorspace": self.colorspace,
        }

    @staticmethod
    def from_dict(d: dict) -> "ColorModel":
        return ColorModel(
            mixture=MixtureModel.from_dict(d["mixture"]),
            labels=list(d["labels"]),
            provenance=d["provenance"],
            colorspace=d.get("colorspace", "lab"),
        )


@dataclass(frozen=True)
class Detection:
    frame_id: str
    bbox: BoundingBox
    mask: BinaryMask  # cropped to bbox
    apple_pixels: int


@dataclass
class SupervisionSession:
    """Interactive click session over a handful of frames.

    Holds the pooled superpixel colors and the working mixture the user
    labels by clicking. Single-writer by design.
    """

    dataset_id: str
    frames: dict[str, LabImage]
    maps: dict[str, slic.SuperpixelMap]
    colors: np.ndarray  # pooled superpixel mean colors, (n, 3)
    color_index: list[tuple[str, int]]  # (frame id, superpixel id) per row
    working_mixture: MixtureModel
    component_labels: dict[int, str] = field(default_factory=dict)
    clicks: list[dict] = field(default_factory=list)
    finalized: bool = False

    def frame_ids(self) -> list[str]:
        return list(self.frames)


def pool_superpixel_colors(
    frames: dict[str, LabImage], cfg: DetectConfig
) -> tuple[dict[str, slic.SuperpixelMap], np.ndarray, list[tuple[str, int]]]:
    maps = {fid: slic.slic_segment(img, cfg.slic) for fid, img in frames.items()}
    colors, index = [], []
    for fid, sp_map in maps.items():
        for sp in sp_map.superpixels:
            colors.append(sp.mean_lab)
            index.append((fid, sp.id))
    return maps, np.array(colors), index


def build_color_clusters(frames: list[LabImage], cfg: DetectConfig) -> MixtureModel:
    """SLIC each frame, pool superpixel mean colors, fit a k~25 mixture."""
    if not frames:
        raise ValidationError("at least one frame required")
    named = {f"frame{i}": f for i, f in enumerate(frames)}
    _, colors, _ = pool_superpixel_colors(named, cfg)
    model, _ = mixture.fit_gmm(colors, cfg.color_classes, cfg.em)
    return model


def start_session(
    dataset_id: str, frames: dict[str, LabImage], cfg: DetectConfig
) -> SupervisionSession:
    maps, colors, index = pool_superpixel_colors(frames, cfg)
    k = min(cfg.color_classes, len(colors))
    if k < 1:
        raise ValidationError("no superpixels to cluster")
    working, _ = mixture.fit_gmm(colors, k, cfg.em)
    return SupervisionSession(
        dataset_id=dataset_id,
        frames=frames,
        maps=maps,
        colors=colors,
        color_index=index,
        working_mixture=working,
    )


def _session_assignments(session: SupervisionSession) -> np.ndarray:
    """argmax component per pooled superpixel color."""
    resp = mixture.responsibilities(session.working_mixture, session.colors)
    return resp.argmax(axis=1)


def component_highlight_mask(
    session: SupervisionSession, component_id: int, frame_id: str
) -> BinaryMask:
    """Union of superpixels in one frame argmax-assigned to a component."""
    sp_map = session.maps[frame_id]
    assign = _session_assignments(session)
    member = {
        sp
        for (fid, sp), comp in zip(session.color_index, assign)
        if fid == frame_id and comp == component_id
    }
    bits = np.isin(sp_map.labels, sorted(member))
    return BinaryMask(bits)


def click_to_cluster(
    session: SupervisionSession, frame_id: str, x: int, y: int
) -> tuple[int, BinaryMask]:
    """Resolve a click to the color component with maximum responsibility
    for the clicked superpixel's mean color; returns the component id plus
    the highlight mask of that component in the clicked frame."""
    if frame_id not in session.frames:
        raise NotFoundError(f"unknown frame {frame_id!r}")
    frame = session.frames[frame_id]
    if not (0 <= x < frame.width and 0 <= y < frame.height):
        raise ValidationError(f"pixel ({x},{y}) outside {frame.width}x{frame.height} frame")
    sp_map = session.maps[frame_id]
    sp_id = int(sp_map.labels[y, x])
    color = next(s.mean_lab for s in sp_map.superpixels if s.id == sp_id)
    resp = mixture.responsibilities(session.working_mixture, color[None, :])
    component_id = int(resp[0].argmax())
    session.clicks.append(
        {"frame": frame_id, "x": int(x), "y": int(y), "component": component_id}
    )
    return component_id, component_highlight_mask(session, component_id, frame_id)


def label_cluster(session: SupervisionSession, component_id: int, label: str) -> None:
    """Record a component label; idempotent, last label wins."""
    if not 0 <= component_id < session.working_mixture.k:
        raise NotFoundError(f"unknown component {component_id}")
    if label not in (APPLE, BACKGROUND):
        raise ValidationError(f"label must be {APPLE!r} or {BACKGROUND!r}")
    session.component_labels[component_id] = label


def finalize_model(
    session: SupervisionSession, provenance: str = "user-supervised"
) -> ColorModel:
    """Freeze the session into an immutable ColorModel."""
    labels = [
        session.component_labels.get(i, BACKGROUND)
        for i in range(session.working_mixture.k)
    ]
    if APPLE not in labels:
        raise AppleYieldError("cannot finalize: no apple-labeled component")
    return ColorModel(mixture=session.working_mixture, labels=labels, provenance=provenance)


def _frame_component_gaussians(
    colors: np.ndarray, assignment: np.ndarray, k: int, floor: float
) -> dict[int, Gaussian]:
    out = {}
    for comp in range(k):
        member = colors[assignment == comp]
        if len(member) == 0:
            continue
        mean = member.mean(axis=0)
        if len(member) > 1:
            cov = np.cov(member.T)
        else:
            cov = np.zeros((3, 3))
        cov = 0.5 * (cov + cov.T) + floor * np.eye(3)
        out[comp] = Gaussian(mean, cov)
    return out


def classify_frame(frame: LabImage, model: ColorModel, cfg: DetectConfig) -> BinaryMask:
    """Classify every superpixel apple/background.

    A fresh mixture with the model's component count is fit over the
    frame's superpixel colors; each frame component inherits the label of
    the KL-closest model component, or background if the closest KL
    exceeds the threshold.
    """
    sp_map = slic.slic_segment(frame, cfg.slic)
    colors = np.array([s.mean_lab for s in sp_map.superpixels])
    sp_ids = np.array([s.id for s in sp_map.superpixels])
    k = min(model.mixture.k, len(colors))
    frame_mixture, _ = mixture.fit_gmm(colors, k, cfg.em)
    assignment = mixture.responsibilities(frame_mixture, colors).argmax(axis=1)
    frame_gaussians = _frame_component_gaussians(
        colors, assignment, k, cfg.em.covariance_floor
    )

    apple_components = set()
    for comp, g in frame_gaussians.items():
        kls = [mixture.kl_gaussian(g, mg) for mg in model.mixture.components]
        best = int(np.argmin(kls))
        if kls[best] <= cfg.kl_threshold and model.labels[best] == APPLE:
            apple_components.add(comp)

    apple_sp = sp_ids[np.isin(assignment, sorted(apple_components))]
    bits = np.isin(sp_map.labels, apple_sp)
    return BinaryMask(bits)


def detections_from_mask(
    mask: BinaryMask, min_area: int = 20, frame_id: str = ""
) -> list[Detection]:
    """8-connected components of the apple mask, area-filtered."""
    comps = connected_components(mask, connectivity=8)
    out = []
    for c in comps.components:
        if c.pixel_count < min_area:
            continue
        b = c.bbox
        crop = BinaryMask(comps.labels[b.y : b.y2, b.x : b.x2] == c.id)
        out.append(
            Detection(frame_id=frame_id, bbox=b, mask=crop, apple_pixels=c.pixel_count)
        )
    return out
