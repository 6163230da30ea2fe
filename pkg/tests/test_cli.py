import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from appleyield import data_io
from appleyield.cli import main
from appleyield.imaging import write_png

from conftest import apple_frame


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def make_dataset(tmp_path, n_frames=2, harvested=None):
    frames = []
    truths = {}
    for i in range(n_frames):
        rgb, truth = apple_frame(size=64, n_discs=2, radius=6, seed=i)
        png = tmp_path / f"f{i}.png"
        write_png(rgb, png)
        frames.append({"id": f"f{i}", "path": png.name})
        truths[f"f{i}"] = truth
    doc = {"format_version": 1, "dataset_id": "syn", "frames": frames}
    if harvested is not None:
        doc["harvested"] = harvested
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(doc))
    return manifest, truths


def click_file(tmp_path, truths):
    ys, xs = np.nonzero(truths["f0"].bits)
    by, bx = np.nonzero(~truths["f0"].bits)
    clicks = [
        {"frame": "f0", "x": int(xs[0]), "y": int(ys[0]), "label": "apple"},
        {"frame": "f0", "x": int(bx[-1]), "y": int(by[-1]), "label": "background"},
    ]
    p = tmp_path / "clicks.json"
    p.write_text(json.dumps(clicks))
    return p


class TestSimulate:
    def test_seed_7_byte_identical(self, runner, tmp_path):
        for d in ("a", "b"):
            r = run(runner, "simulate", "--seed", 7, "--out", tmp_path / d, "--render")
            assert r.exit_code == 0
        for name in ("front.json", "back.json", "scene.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        fa = sorted((tmp_path / "a" / "frames").iterdir())
        fb = sorted((tmp_path / "b" / "frames").iterdir())
        assert [p.name for p in fa] == [p.name for p in fb]
        for pa, pb in zip(fa, fb):
            assert pa.read_bytes() == pb.read_bytes()

    def test_invalid_flag_usage_error(self, runner, tmp_path):
        r = runner.invoke(main, ["simulate", "--bogus"])
        assert r.exit_code == 2


class TestYield:
    def test_full_visibility_matches_truth(self, runner, tmp_path):
        run(runner, "simulate", "--seed", 11, "--visibility", 1.0, "--out", tmp_path / "s")
        truth = json.loads((tmp_path / "s" / "scene.json").read_text())["ground_truth"]
        r = run(
            runner,
            "yield",
            "--front", tmp_path / "s" / "front.json",
            "--back", tmp_path / "s" / "back.json",
            "--out", tmp_path / "y",
            "--harvested", truth,
        )
        assert r.exit_code == 0
        doc = json.loads((tmp_path / "y" / "report.json").read_text())
        assert doc["reports"][0]["merged_total"] == truth
        assert doc["reports"][0]["accuracy_percent"] == 100.0

    def test_external_counts(self, runner, tmp_path):
        run(runner, "simulate", "--seed", 2, "--out", tmp_path / "s")
        front, _ = data_io.read_side_model(tmp_path / "s" / "front.json")
        back, _ = data_io.read_side_model(tmp_path / "s" / "back.json")
        counts = tmp_path / "counts.jsonl"
        with open(counts, "w") as fh:
            for t in front.tracks + back.tracks:
                fh.write(json.dumps({"cluster_id": t.cluster_id, "count": 1}) + "\n")
        r = run(
            runner,
            "yield",
            "--front", tmp_path / "s" / "front.json",
            "--back", tmp_path / "s" / "back.json",
            "--external-counts", counts,
            "--out", tmp_path / "y",
        )
        assert r.exit_code == 0
        doc = json.loads((tmp_path / "y" / "report.json").read_text())
        assert doc["reports"][0]["single_side_sum"] == len(front.tracks) + len(back.tracks)

    def test_pipeline_failure_exit_1(self, runner, tmp_path):
        (tmp_path / "bad.json").write_text("{}")
        r = run(
            runner,
            "yield",
            "--front", tmp_path / "bad.json",
            "--back", tmp_path / "bad.json",
            "--out", tmp_path / "y",
        )
        assert r.exit_code == 1
        assert "error" in r.output


class TestEvaluate:
    def test_perfect_detection_all_ones(self, runner, tmp_path):
        # detections equal to ground truth: curve rows are all 1.0
        from appleyield.data_io import BoxAnnotation, save_bbox_annotations, write_detections
        from appleyield.detect import Detection
        from appleyield.imaging import BinaryMask, BoundingBox

        boxes = [BoundingBox(i * 20, 5, 10, 10) for i in range(3)]
        dets = [
            Detection("f0", b, BinaryMask(np.ones((10, 10), dtype=bool)), 100) for b in boxes
        ]
        write_detections(dets, tmp_path / "d.jsonl")
        save_bbox_annotations([BoxAnnotation("f0", boxes)], tmp_path / "gt.json")
        r = run(
            runner,
            "evaluate",
            "--detections", tmp_path / "d.jsonl",
            "--ground-truth", tmp_path / "gt.json",
            "--out", tmp_path / "e",
        )
        assert r.exit_code == 0
        rows = (tmp_path / "e" / "curve.csv").read_text().strip().splitlines()[1:]
        assert len(rows) == 99
        for row in rows:
            assert row.split(",")[1:] == ["1.0", "1.0", "1.0"]
        assert (tmp_path / "e" / "recall.svg").exists()


class TestIngest:
    def test_valid(self, runner, tmp_path):
        manifest, _ = make_dataset(tmp_path, harvested=270)
        r = run(runner, "ingest", "--manifest", manifest)
        assert r.exit_code == 0
        assert "2 frames" in r.output and "harvested: 270" in r.output

    def test_invalid_manifest(self, runner, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text('{"format_version": 2, "dataset_id": "x", "frames": []}')
        r = run(runner, "ingest", "--manifest", bad)
        assert r.exit_code == 1


class TestTrainDetectCount:
    def test_full_chain(self, runner, tmp_path):
        manifest, truths = make_dataset(tmp_path)
        clicks = click_file(tmp_path, truths)
        model = tmp_path / "model.json"
        r = run(
            runner,
            "train-color-model",
            "--manifest", manifest,
            "--clicks", clicks,
            "--out", model,
            "--color-classes", 2,
            "--superpixels", 60,
        )
        assert r.exit_code == 0, r.output
        assert model.exists()

        dets = tmp_path / "d.jsonl"
        r = run(
            runner,
            "detect",
            "--manifest", manifest,
            "--model", model,
            "--out", dets,
            "--superpixels", 60,
            "--masks-dir", tmp_path / "masks",
        )
        assert r.exit_code == 0, r.output
        loaded = data_io.read_detections(dets)
        assert len(loaded) >= 2
        assert (tmp_path / "masks" / "f0.png").exists()

        counts = tmp_path / "c.jsonl"
        r = run(runner, "count", "--detections", dets, "--out", counts)
        assert r.exit_code == 0, r.output
        recs = [json.loads(l) for l in counts.read_text().splitlines()]
        assert len(recs) == len(loaded)
        assert all(0 <= rec["count"] <= 6 for rec in recs)
