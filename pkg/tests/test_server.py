import io
import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from appleyield.imaging import write_png
from appleyield.server import create_app

from conftest import apple_frame


@pytest.fixture
def data_root(tmp_path):
    root = tmp_path / "data"
    ds = root / "syn"
    ds.mkdir(parents=True)
    truths = {}
    frames = []
    for i in range(2):
        rgb, truth = apple_frame(size=64, n_discs=2, radius=6, seed=i)
        write_png(rgb, ds / f"f{i}.png")
        frames.append({"id": f"f{i}", "path": f"f{i}.png"})
        truths[f"f{i}"] = truth
    (ds / "manifest.json").write_text(
        json.dumps({"format_version": 1, "dataset_id": "syn", "frames": frames})
    )
    return root, truths


@pytest.fixture
def client(data_root):
    root, _ = data_root
    return TestClient(create_app(root))


def open_session(client):
    r = client.post("/v1/sessions", json={"dataset": "syn"})
    assert r.status_code == 201
    return r.json()


def apple_click(truths, frame="f0"):
    ys, xs = np.nonzero(truths[frame].bits)
    return {"frame": frame, "x": int(xs[0]), "y": int(ys[0])}


class TestSessions:
    def test_create(self, client):
        body = open_session(client)
        assert body["state"] == "open"
        assert body["frames"] == ["f0", "f1"]
        assert body["components"] >= 1

    def test_unknown_dataset_404(self, client):
        assert client.post("/v1/sessions", json={"dataset": "ghost"}).status_code == 404

    def test_unknown_frames_404(self, client):
        r = client.post("/v1/sessions", json={"dataset": "syn", "frames": ["nope"]})
        assert r.status_code == 404

    def test_info(self, client):
        sid = open_session(client)["session_id"]
        r = client.get(f"/v1/sessions/{sid}")
        assert r.status_code == 200
        assert r.json()["state"] == "open"
        assert client.get("/v1/sessions/missing").status_code == 404


class TestFrames:
    def test_png_round_trip(self, client, data_root):
        open_session(client)
        r = client.get("/v1/frames/f0")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        from PIL import Image

        img = Image.open(io.BytesIO(r.content))
        assert img.size == (64, 64)

    def test_unknown_frame_404(self, client):
        open_session(client)
        assert client.get("/v1/frames/ghost").status_code == 404


class TestClick:
    def test_click_returns_component_and_mask(self, client, data_root, tmp_path):
        _, truths = data_root
        sid = open_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/click", json=apple_click(truths))
        assert r.status_code == 200
        body = r.json()
        assert isinstance(body["component_id"], int)
        assert body["highlight_mask_rle"]["size"] == [64, 64]

    def test_identical_clicks_identical_component(self, client, data_root):
        _, truths = data_root
        sid = open_session(client)["session_id"]
        c = apple_click(truths)
        a = client.post(f"/v1/sessions/{sid}/click", json=c).json()
        b = client.post(f"/v1/sessions/{sid}/click", json=c).json()
        assert a == b

    def test_out_of_bounds_422(self, client, data_root):
        sid = open_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/click", json={"frame": "f0", "x": 999, "y": 0})
        assert r.status_code == 422

    def test_append_only_click_log(self, client, data_root):
        root, truths = data_root
        sid = open_session(client)["session_id"]
        c = apple_click(truths)
        client.post(f"/v1/sessions/{sid}/click", json=c)
        client.post(f"/v1/sessions/{sid}/click", json=c)
        log = (root / "sessions" / f"{sid}.clicks.jsonl").read_text().splitlines()
        assert len(log) == 2
        assert json.loads(log[0])["frame"] == "f0"

    def test_request_token_replay_cached(self, client, data_root):
        root, truths = data_root
        sid = open_session(client)["session_id"]
        c = {**apple_click(truths), "request_token": "t1"}
        a = client.post(f"/v1/sessions/{sid}/click", json=c).json()
        b = client.post(f"/v1/sessions/{sid}/click", json=c).json()
        assert a == b
        log = (root / "sessions" / f"{sid}.clicks.jsonl").read_text().splitlines()
        assert len(log) == 1  # replay not re-applied


class TestLabelFinalize:
    def finalize_flow(self, client, truths):
        sid = open_session(client)["session_id"]
        comp = client.post(f"/v1/sessions/{sid}/click", json=apple_click(truths)).json()[
            "component_id"
        ]
        r = client.post(
            f"/v1/sessions/{sid}/label", json={"component_id": comp, "label": "apple"}
        )
        assert r.status_code == 200
        return sid

    def test_finalize_zero_apple_422(self, client):
        sid = open_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/finalize", json={})
        assert r.status_code == 422

    def test_finalize_and_freeze(self, client, data_root):
        root, truths = data_root
        sid = self.finalize_flow(client, truths)
        r = client.post(f"/v1/sessions/{sid}/finalize", json={})
        assert r.status_code == 200
        model_id = r.json()["model_id"]
        assert (root / "models" / f"{model_id}.json").exists()
        # every mutation now conflicts
        assert client.post(f"/v1/sessions/{sid}/finalize", json={}).status_code == 409
        assert (
            client.post(
                f"/v1/sessions/{sid}/label", json={"component_id": 0, "label": "apple"}
            ).status_code
            == 409
        )
        assert (
            client.post(f"/v1/sessions/{sid}/click", json=apple_click(truths)).status_code == 409
        )
        assert client.get(f"/v1/sessions/{sid}").json()["state"] == "finalized"

    def test_bad_label_422(self, client, data_root):
        sid = open_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/label", json={"component_id": 0, "label": "pear"})
        assert r.status_code == 422

    def test_unknown_component_404(self, client):
        sid = open_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/label", json={"component_id": 99, "label": "apple"})
        assert r.status_code == 404


class TestDetectEndpoint:
    def test_unknown_model_404(self, client):
        open_session(client)
        assert client.post("/v1/models/ghost/detect?frame=f0").status_code == 404

    def test_detect_matches_batch_cli(self, client, data_root, tmp_path):
        from click.testing import CliRunner

        from appleyield import data_io
        from appleyield.cli import main

        root, truths = data_root
        sid = open_session(client)["session_id"]
        comp = client.post(f"/v1/sessions/{sid}/click", json=apple_click(truths)).json()[
            "component_id"
        ]
        client.post(f"/v1/sessions/{sid}/label", json={"component_id": comp, "label": "apple"})
        model_id = client.post(f"/v1/sessions/{sid}/finalize", json={}).json()["model_id"]

        api = {
            fid: client.post(f"/v1/models/{model_id}/detect?frame={fid}").json()["detections"]
            for fid in ("f0", "f1")
        }

        out = tmp_path / "d.jsonl"
        r = CliRunner().invoke(
            main,
            [
                "detect",
                "--manifest", str(root / "syn" / "manifest.json"),
                "--model", str(root / "models" / f"{model_id}.json"),
                "--out", str(out),
            ],
            catch_exceptions=False,
        )
        assert r.exit_code == 0, r.output
        cli = {fid: [] for fid in ("f0", "f1")}
        for line in out.read_text().splitlines():
            rec = json.loads(line)
            cli.setdefault(rec["frame"], []).append(rec)
        assert cli == api


class TestReports:
    def test_404_then_200(self, client, data_root):
        root, _ = data_root
        assert client.get("/v1/reports/syn").status_code == 404
        (root / "syn" / "report.json").write_text(json.dumps({"format_version": 1, "reports": []}))
        r = client.get("/v1/reports/syn")
        assert r.status_code == 200 and r.json()["reports"] == []
