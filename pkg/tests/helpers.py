"""Shared builders for synthetic fixtures used across the test suite."""

import json
import math

import cv2
import numpy as np

from robobench.core import make_rng
from robobench.dataio import write_image
from robobench.detection import DetBox, GtBox

CLASSES = ("car", "pedestrian")
ATTRIBUTES = ("moving", "parked", None)


def fixture_images(n=10, h=64, w=96):
    """Deterministic structured images: smooth seeded texture plus shapes."""
    images = []
    for i in range(n):
        rng = make_rng(1000 + i)
        base = rng.random((h, w, 3))
        base = cv2.GaussianBlur(base, (0, 0), 3.0)
        lo, hi = base.min(), base.max()
        img = (base - lo) / (hi - lo) * 200 + 20
        cv2.rectangle(img, (10 + 3 * i, 8), (30 + 3 * i, 28), (240, 60, 60), -1)
        cv2.circle(img, (60, 40), 12, (40, 220, 90), -1)
        cv2.line(img, (0, h - 5 - i), (w - 1, 10 + i), (250, 250, 250), 2)
        images.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return images


def random_cloud(rng, n, num_beams=32):
    """Synthetic cloud with integral rings; returns (N, 5) float32."""
    pts = np.empty((n, 5), dtype=np.float32)
    pts[:, 0:3] = rng.uniform(-50, 50, (n, 3)).astype(np.float32)
    pts[:, 3] = rng.uniform(0, 1, n).astype(np.float32)
    pts[:, 4] = rng.integers(0, num_beams, n).astype(np.float32)
    return pts


def random_box_dict(rng, sample_ids, with_score):
    """Plain-dict box for the reference oracle; spans the match thresholds."""
    rec = {
        "sample_id": str(rng.choice(sample_ids)),
        "translation": [float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)),
                        float(rng.uniform(-2, 2))],
        "size": [float(rng.uniform(0.5, 3.0)) for _ in range(3)],
        "yaw": float(rng.uniform(-math.pi, math.pi)),
        "velocity": [float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))],
        "class_name": str(rng.choice(CLASSES)),
        "attribute": ATTRIBUTES[int(rng.integers(0, len(ATTRIBUTES)))],
    }
    if with_score:
        rec["score"] = float(rng.uniform(0, 1))
    return rec


def random_detection_instance(rng, max_samples=5, max_boxes=10):
    """(pred dicts, gt dicts) with at least one GT box."""
    sample_ids = [f"s{i}" for i in range(int(rng.integers(1, max_samples + 1)))]
    n_gt = int(rng.integers(1, max_boxes + 1))
    n_pred = int(rng.integers(0, max_boxes + 1))
    gts = [random_box_dict(rng, sample_ids, False) for _ in range(n_gt)]
    preds = [random_box_dict(rng, sample_ids, True) for _ in range(n_pred)]
    return preds, gts, sample_ids


def box_from_dict(rec, with_score):
    kwargs = dict(
        sample_id=rec["sample_id"],
        translation=tuple(rec["translation"]),
        size=tuple(rec["size"]),
        yaw=rec["yaw"],
        velocity=tuple(rec["velocity"]),
        class_name=rec["class_name"],
        attribute=rec["attribute"],
    )
    if with_score:
        return DetBox(**kwargs, score=rec["score"])
    return GtBox(**kwargs)


def perturbed_prediction(gt_rec, rng, noise):
    """GT box turned into a prediction with bounded noise; used to grade teams."""
    rec = dict(gt_rec)
    rec["translation"] = [
        gt_rec["translation"][0] + float(rng.normal(0, noise)),
        gt_rec["translation"][1] + float(rng.normal(0, noise)),
        gt_rec["translation"][2],
    ]
    rec["yaw"] = gt_rec["yaw"] + float(rng.normal(0, noise))
    rec["score"] = float(rng.uniform(0.3, 1.0))
    return rec


def build_detection_dataset(root, n_samples=4, boxes_per_sample=3, seed=5,
                            corruptions=("gaussian_noise", "fog"), with_images=False):
    """Write a detection-track manifest + GT files; returns the manifest path."""
    rng = make_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(exist_ok=True)
    if with_images:
        (root / "images").mkdir(exist_ok=True)
        images = fixture_images(n_samples, 48, 64)
    samples = []
    gt_records = {}
    for i in range(n_samples):
        sid = f"s{i:03d}"
        boxes = [random_box_dict(rng, [sid], False) for _ in range(boxes_per_sample)]
        gt_records[sid] = boxes
        gt_rel = f"gt/{sid}.jsonl"
        (root / gt_rel).write_text(
            "\n".join(json.dumps(b) for b in boxes) + "\n", encoding="utf-8")
        sample = {
            "sample_id": sid,
            "cameras": {},
            "gt": gt_rel,
            "corruption": corruptions[i % len(corruptions)],
            "severity": 3,
        }
        if with_images:
            img_rel = f"images/{sid}.png"
            write_image(images[i], root / img_rel)
            sample["cameras"] = {"CAM_FRONT": img_rel}
        samples.append(sample)
    manifest = {"schema_version": 1, "track": "bev_detection", "samples": samples}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path, gt_records


def submission_text(track, team, records, method=""):
    header = {"schema_version": 1, "track": track, "team": team}
    if method:
        header["method"] = method
    return "\n".join([json.dumps(header)] + [json.dumps(r) for r in records]) + "\n"


def detection_submission_text(team, gt_records, rng, noise=0.2, track="bev_detection"):
    records = []
    for sid, boxes in gt_records.items():
        for b in boxes:
            records.append(perturbed_prediction(b, rng, noise))
    return submission_text(track, team, records)
