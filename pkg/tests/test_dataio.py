import json

import numpy as np
import pytest

from helpers import random_cloud, submission_text
from robobench.core import make_rng
from robobench.dataio import (Manifest, load_manifest, parse_submission,
                              parse_submission_text, read_depth, read_grid,
                              read_gt_boxes, read_image, read_pointcloud,
                              save_manifest, write_depth, write_grid,
                              write_image, write_pointcloud)
from robobench.errors import CodecError, ValidationError
from robobench.lidar import PointCloud
from robobench.tracks import Track


# ------------------------------------------------------------------ images

def test_image_round_trip(tmp_path):
    img = make_rng(1).integers(0, 256, (20, 30, 3), dtype=np.uint8)
    p = tmp_path / "a.png"
    write_image(img, p)
    assert np.array_equal(read_image(p), img)


def test_image_rejects_grayscale(tmp_path):
    from PIL import Image
    p = tmp_path / "gray.png"
    Image.new("L", (8, 8)).save(p)
    with pytest.raises(ValidationError, match="convert"):
        read_image(p)


def test_image_rejects_non_png(tmp_path):
    from PIL import Image
    p = tmp_path / "img.png"  # jpeg bytes behind a png suffix
    Image.new("RGB", (8, 8)).save(p, format="JPEG")
    with pytest.raises(ValidationError, match="PNG"):
        read_image(p)


def test_image_truncated_is_codec_error(tmp_path):
    img = make_rng(2).integers(0, 256, (32, 32, 3), dtype=np.uint8)
    p = tmp_path / "t.png"
    write_image(img, p)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(CodecError):
        read_image(p)


def test_image_garbage_is_codec_error(tmp_path):
    p = tmp_path / "g.png"
    p.write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
    with pytest.raises(CodecError):
        read_image(p)


# ------------------------------------------------------------ point clouds

def test_pointcloud_round_trip(tmp_path):
    pts = random_cloud(make_rng(3), 1000)
    p = tmp_path / "pc.bin"
    write_pointcloud(PointCloud(pts), p)
    assert p.stat().st_size == 1000 * 20
    assert np.array_equal(read_pointcloud(p).data, pts)


def test_pointcloud_alignment_error(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x00" * 19)
    with pytest.raises(CodecError, match="multiple"):
        read_pointcloud(p)


def test_pointcloud_empty_file_is_empty_cloud(tmp_path):
    p = tmp_path / "empty.bin"
    p.write_bytes(b"")
    assert len(read_pointcloud(p)) == 0


def test_pointcloud_nonfinite_rejected(tmp_path):
    pts = random_cloud(make_rng(4), 10)
    pts[3, 1] = np.inf
    p = tmp_path / "inf.bin"
    p.write_bytes(pts.tobytes())
    with pytest.raises(CodecError, match="non-finite"):
        read_pointcloud(p)


def test_pointcloud_write_requires_rings(tmp_path):
    pc = PointCloud(random_cloud(make_rng(5), 10)[:, :4])
    with pytest.raises(ValidationError, match="ring"):
        write_pointcloud(pc, tmp_path / "x.bin")


# ------------------------------------------------------------------- grids

@pytest.mark.parametrize("dtype,shape", [
    (np.uint8, (6, 8)), (np.uint16, (5, 5)), (np.int32, (4, 4, 4)),
    (np.float32, (7, 3)),
])
def test_grid_round_trip(tmp_path, dtype, shape):
    rng = make_rng(6)
    if np.issubdtype(dtype, np.floating):
        arr = rng.random(shape).astype(dtype)
    else:
        arr = rng.integers(0, 4, shape).astype(dtype)
    p = tmp_path / "g.grid"
    write_grid(arr, p, ignore_value=7)
    back, ignore = read_grid(p)
    assert ignore == 7
    assert back.dtype == arr.dtype
    assert np.array_equal(back, arr)


def test_grid_bad_magic(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_bytes(b"NOTGRID" + b"\x00" * 20)
    with pytest.raises(CodecError, match="magic"):
        read_grid(p)


def test_grid_payload_size_mismatch(tmp_path):
    arr = np.zeros((4, 4), dtype=np.uint8)
    p = tmp_path / "g.grid"
    write_grid(arr, p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(CodecError):
        read_grid(p)


# ------------------------------------------------------------------- depth

def test_depth_png_round_trip(tmp_path):
    rng = make_rng(7)
    depth = np.round(rng.uniform(0, 100, (12, 16)) * 256) / 256  # exact at 1/256 m
    p = tmp_path / "d.png"
    write_depth(depth, p)
    np.testing.assert_allclose(read_depth(p), depth, atol=1e-6)


def test_depth_grid_round_trip(tmp_path):
    depth = make_rng(8).uniform(0, 80, (9, 9)).astype(np.float32)
    p = tmp_path / "d.grid"
    write_depth(depth, p)
    np.testing.assert_array_equal(read_depth(p), depth)


def test_depth_rejects_rgb_png(tmp_path):
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    p = tmp_path / "rgb.png"
    write_image(img, p)
    with pytest.raises(ValidationError, match="16-bit"):
        read_depth(p)


# --------------------------------------------------------------- manifests

def manifest_doc(track="bev_detection", **extra):
    doc = {
        "schema_version": 1,
        "track": track,
        "samples": [
            {"sample_id": "s0", "cameras": {}, "corruption": "fog", "severity": 3},
            {"sample_id": "s1", "cameras": {}, "corruption": "clean", "severity": 0},
        ],
    }
    doc.update(extra)
    return doc


def write_manifest(tmp_path, doc):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(doc))
    return p


def test_manifest_minimal_valid(tmp_path):
    m = load_manifest(write_manifest(tmp_path, manifest_doc()))
    assert m.track is Track.BEV_DETECTION
    assert m.sample_ids() == ["s0", "s1"]


def test_manifest_duplicate_id(tmp_path):
    doc = manifest_doc()
    doc["samples"][1]["sample_id"] = "s0"
    with pytest.raises(ValidationError, match="duplicate sample_id 's0'"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_unknown_corruption(tmp_path):
    doc = manifest_doc()
    doc["samples"][0]["corruption"] = "rain"
    with pytest.raises(ValidationError, match="unknown corruption"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_lidar_tag_on_camera_track(tmp_path):
    doc = manifest_doc(track="depth")
    doc["samples"][0]["corruption"] = "lidar_beam_drop"
    with pytest.raises(ValidationError, match="LiDAR failure"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_clean_requires_severity_zero(tmp_path):
    doc = manifest_doc()
    doc["samples"][1]["severity"] = 2
    with pytest.raises(ValidationError, match="severity 0"):
        load_manifest(write_manifest(tmp_path, doc))


def test_manifest_missing_file_checked(tmp_path):
    doc = manifest_doc()
    doc["samples"][0]["gt"] = "gt/absent.jsonl"
    with pytest.raises(ValidationError, match="missing file"):
        load_manifest(write_manifest(tmp_path, doc))
    # and the check can be deferred
    m = load_manifest(write_manifest(tmp_path, doc), check_files=False)
    assert m.samples[0].gt == "gt/absent.jsonl"


def test_manifest_save_load_round_trip(tmp_path):
    m = load_manifest(write_manifest(tmp_path, manifest_doc()))
    out = tmp_path / "copy.json"
    save_manifest(m, out)
    again = load_manifest(out)
    assert again.track is m.track
    assert [s.sample_id for s in again.samples] == [s.sample_id for s in m.samples]
    assert [s.corruption for s in again.samples] == [s.corruption for s in m.samples]


def test_manifest_invalid_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_manifest(p)


# ------------------------------------------------------------- submissions

def box_record(sid="s0", score=0.9, **over):
    rec = {"sample_id": sid, "translation": [0.0, 0.0, 0.0],
           "size": [2.0, 4.0, 1.5], "yaw": 0.0, "velocity": [0.0, 0.0],
           "class_name": "car", "attribute": "moving", "score": score}
    rec.update(over)
    return rec


def test_submission_parses(tmp_path):
    text = submission_text("bev_detection", "team-a",
                           [box_record("s0"), box_record("s1", score=0.4)])
    sub = parse_submission_text(text, Track.BEV_DETECTION, known_ids={"s0", "s1"})
    assert sub.team == "team-a"
    assert set(sub.boxes) == {"s0", "s1"}


def test_submission_negative_width_names_line(tmp_path):
    text = submission_text("bev_detection", "t",
                           [box_record(), box_record(size=[-1.0, 2.0, 1.0])])
    with pytest.raises(ValidationError, match=":3"):
        parse_submission_text(text, Track.BEV_DETECTION)


def test_submission_unknown_sample_named(tmp_path):
    text = submission_text("bev_detection", "t", [box_record("ghost")])
    with pytest.raises(ValidationError, match="ghost"):
        parse_submission_text(text, Track.BEV_DETECTION, known_ids={"s0"})


def test_submission_track_mismatch():
    text = submission_text("depth", "t", [])
    with pytest.raises(ValidationError, match="declares track"):
        parse_submission_text(text, Track.BEV_DETECTION)


def test_submission_missing_header():
    with pytest.raises(ValidationError):
        parse_submission_text(json.dumps(box_record()) + "\n", Track.BEV_DETECTION)


def test_submission_malformed_line_indexed():
    text = submission_text("bev_detection", "t", [box_record()]) + "{oops\n"
    with pytest.raises(ValidationError, match=":3"):
        parse_submission_text(text, Track.BEV_DETECTION)


def test_submission_grid_track_records(tmp_path):
    text = submission_text("map_segmentation", "t",
                           [{"sample_id": "s0", "grid": "pred/s0.grid"}])
    sub = parse_submission_text(text, Track.MAP_SEGMENTATION, root=tmp_path)
    assert sub.files == {"s0": "pred/s0.grid"}
    assert sub.resolve("pred/s0.grid") == tmp_path / "pred" / "s0.grid"


def test_submission_from_file_resolves_relative(tmp_path):
    p = tmp_path / "sub.jsonl"
    p.write_text(submission_text("depth", "t", [{"sample_id": "s0", "depth": "d.png"}]))
    sub = parse_submission(p, Track.DEPTH)
    assert sub.resolve(sub.files["s0"]) == tmp_path / "d.png"


def test_gt_boxes_reader(tmp_path):
    rec = box_record()
    del rec["score"]
    p = tmp_path / "gt.jsonl"
    p.write_text(json.dumps(rec) + "\n\n" + json.dumps(rec) + "\n")
    boxes = read_gt_boxes(p)
    assert len(boxes) == 2 and boxes[0].class_name == "car"
