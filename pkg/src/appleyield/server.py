"""HTTP supervision service.

All endpoints live under /v1. Sessions are single-writer: mutations are
serialized by a per-session lock, mutations on a finalized session get
409, and each mutating endpoint accepts an optional request_token so
replays return the cached response instead of re-applying. Clicks are
persisted to an append-only log so a crash loses no supervision work.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import data_io, detect, pipeline, rle
from .errors import AppleYieldError, NotFoundError, ValidationError
from .imaging import LabImage, read_png, rgb_to_lab
from .mixture import EmConfig
from .slic import SlicConfig


class SessionRequest(BaseModel):
    dataset: str
    frames: list[str] | None = None
    frame_limit: int | None = 5


class ClickRequest(BaseModel):
    frame: str
    x: int
    y: int
    request_token: str | None = None


class LabelRequest(BaseModel):
    component_id: int
    label: str
    request_token: str | None = None


class FinalizeRequest(BaseModel):
    request_token: str | None = None


@dataclass
class SessionHandle:
    session_id: str
    dataset_id: str
    created_at: str
    session: detect.SupervisionSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    token_cache: dict[str, dict] = field(default_factory=dict)

    @property
    def state(self) -> str:
        return "finalized" if self.session.finalized else "open"


def _default_config() -> detect.DetectConfig:
    return detect.DetectConfig(slic=SlicConfig(), em=EmConfig(rng_seed=0))


def create_app(data_root: Path, ui_dist: Path | None = None) -> FastAPI:
    """Service over a dataset root laid out as {data_root}/{dataset}/manifest.json."""
    data_root = Path(data_root)
    models_dir = data_root / "models"
    sessions_dir = data_root / "sessions"
    app = FastAPI(title="appleyield", version="1")

    sessions: dict[str, SessionHandle] = {}
    frame_paths: dict[str, Path] = {}

    def _get_session(session_id: str) -> SessionHandle:
        if session_id not in sessions:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return sessions[session_id]

    def _mutable(handle: SessionHandle) -> None:
        if handle.session.finalized:
            raise HTTPException(409, "session is finalized")

    @app.exception_handler(AppleYieldError)
    async def _domain_error(request, exc: AppleYieldError):
        from fastapi.responses import JSONResponse

        status = 404 if isinstance(exc, NotFoundError) else 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: SessionRequest):
        manifest_path = data_root / req.dataset / "manifest.json"
        if not manifest_path.exists():
            raise HTTPException(404, f"unknown dataset {req.dataset!r}")
        manifest = data_io.load_manifest(manifest_path)
        selected = [
            (fid, p)
            for fid, p in manifest.frames
            if req.frames is None or fid in req.frames
        ]
        if req.frames is not None and len(selected) != len(req.frames):
            missing = set(req.frames) - {fid for fid, _ in selected}
            raise HTTPException(404, f"unknown frames {sorted(missing)}")
        if req.frame_limit:
            selected = selected[: req.frame_limit]
        if not selected:
            raise HTTPException(422, "session needs at least one frame")
        frames: dict[str, LabImage] = {}
        for fid, p in selected:
            frame_paths[fid] = p
            frames[fid] = rgb_to_lab(read_png(p))
        session = detect.start_session(req.dataset, frames, _default_config())
        sid = uuid.uuid4().hex
        sessions[sid] = SessionHandle(
            session_id=sid,
            dataset_id=req.dataset,
            created_at=datetime.now(timezone.utc).isoformat(),
            session=session,
        )
        return {
            "session_id": sid,
            "dataset": req.dataset,
            "state": "open",
            "frames": list(frames),
            "components": session.working_mixture.k,
        }

    @app.get("/v1/sessions/{session_id}")
    def session_info(session_id: str):
        h = _get_session(session_id)
        return {
            "session_id": h.session_id,
            "dataset": h.dataset_id,
            "state": h.state,
            "created_at": h.created_at,
            "frames": h.session.frame_ids(),
            "components": h.session.working_mixture.k,
            "labels": {str(k): v for k, v in sorted(h.session.component_labels.items())},
            "clicks": len(h.session.clicks),
        }

    @app.get("/v1/frames/{frame_id}")
    def get_frame(frame_id: str):
        if frame_id not in frame_paths:
            raise HTTPException(404, f"unknown frame {frame_id!r}")
        img = read_png(frame_paths[frame_id])
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(img.pixels).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/v1/sessions/{session_id}/click")
    def click(session_id: str, req: ClickRequest):
        h = _get_session(session_id)
        with h.lock:
            _mutable(h)
            if req.request_token and req.request_token in h.token_cache:
                return h.token_cache[req.request_token]
            component, highlight = detect.click_to_cluster(h.session, req.frame, req.x, req.y)
            sessions_dir.mkdir(parents=True, exist_ok=True)
            with open(sessions_dir / f"{session_id}.clicks.jsonl", "a") as fh:
                fh.write(json.dumps({"frame": req.frame, "x": req.x, "y": req.y}) + "\n")
            body = {"component_id": component, "highlight_mask_rle": rle.encode(highlight)}
            if req.request_token:
                h.token_cache[req.request_token] = body
            return body

    @app.post("/v1/sessions/{session_id}/label")
    def label(session_id: str, req: LabelRequest):
        h = _get_session(session_id)
        with h.lock:
            _mutable(h)
            if req.request_token and req.request_token in h.token_cache:
                return h.token_cache[req.request_token]
            detect.label_cluster(h.session, req.component_id, req.label)
            body = {
                "component_id": req.component_id,
                "label": req.label,
                "labels": {str(k): v for k, v in sorted(h.session.component_labels.items())},
            }
            if req.request_token:
                h.token_cache[req.request_token] = body
            return body

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str, req: FinalizeRequest | None = None):
        h = _get_session(session_id)
        with h.lock:
            token = req.request_token if req else None
            if token and token in h.token_cache:
                return h.token_cache[token]
            _mutable(h)
            model = detect.finalize_model(h.session, provenance="user-supervised")
            h.session.finalized = True
            model_id = uuid.uuid4().hex
            models_dir.mkdir(parents=True, exist_ok=True)
            data_io.save_color_model(model, models_dir / f"{model_id}.json")
            body = {"model_id": model_id, "components": model.mixture.k}
            if token:
                h.token_cache[token] = body
            return body

    @app.post("/v1/models/{model_id}/detect")
    def model_detect(model_id: str, frame: str):
        model_path = models_dir / f"{model_id}.json"
        if not model_path.exists():
            raise HTTPException(404, f"unknown model {model_id!r}")
        if frame not in frame_paths:
            raise HTTPException(404, f"unknown frame {frame!r}")
        model = data_io.load_color_model(model_path)
        cfg = detect.DetectConfig(
            color_classes=model.mixture.k,
            slic=SlicConfig(),
            em=EmConfig(rng_seed=0),
        )
        lab = rgb_to_lab(read_png(frame_paths[frame]))
        mask = detect.classify_frame(lab, model, cfg)
        dets = detect.detections_from_mask(mask, cfg.min_area, frame_id=frame)
        return {
            "frame": frame,
            "detections": [
                {
                    "frame": d.frame_id,
                    "bbox": d.bbox.to_list(),
                    "area": d.apple_pixels,
                    "mask_rle": rle.encode(d.mask),
                }
                for d in dets
            ],
        }

    @app.get("/v1/reports/{dataset}")
    def report(dataset: str):
        path = data_root / dataset / "report.json"
        if not path.exists():
            raise HTTPException(404, f"no report for dataset {dataset!r}")
        with open(path) as fh:
            return json.load(fh)

    dist = ui_dist or data_root / "ui"
    if dist.is_dir():
        app.mount("/", StaticFiles(directory=dist, html=True), name="ui")

    return app
