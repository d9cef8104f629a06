"""Depth-map evaluation: Abs Rel, RMSE, and the three ratio accuracies.

Per-image metrics are averaged unweighted across a dataset by default
(macro); micro averaging pools all valid pixels instead. The delta values
are reported in percent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError, ValidationError


@dataclass(frozen=True)
class DepthConfig:
    min_depth: float = 1e-3
    max_depth: float = 80.0
    median_scaling: bool = False
    micro_average: bool = False

    def __post_init__(self):
        if not 0.0 < self.min_depth < self.max_depth:
            raise ValidationError(
                f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    rmse: float
    delta1: float  # percent
    delta2: float
    delta3: float
    valid_pixels: int
    skipped_images: int = 0
    nonfinite_pred_pixels: int = 0

    def as_dict(self) -> dict[str, float]:
        return {"abs_rel": self.abs_rel, "rmse": self.rmse, "delta1": self.delta1,
                "delta2": self.delta2, "delta3": self.delta3}


def median_scale(pred: np.ndarray, gt: np.ndarray,
                 valid: np.ndarray | None = None) -> np.ndarray:
    """Scale pred so its median over valid pixels matches the GT median."""
    if valid is None:
        valid = gt > 0
    if not valid.any():
        raise ValidationError("median scaling needs at least one valid pixel")
    med_pred = float(np.median(pred[valid]))
    med_gt = float(np.median(gt[valid]))
    if med_pred <= 0 or med_gt <= 0:
        raise ValidationError(
            f"median scaling needs positive medians, got pred={med_pred}, gt={med_gt}")
    return pred * (med_gt / med_pred)


def _image_arrays(pred: np.ndarray, gt: np.ndarray, cfg: DepthConfig):
    """Returns (pred_valid, gt_valid, nonfinite_count) or None if no valid px."""
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    valid = (gt > 0) & (gt >= cfg.min_depth) & (gt <= cfg.max_depth) & np.isfinite(gt)
    if not valid.any():
        return None
    p = pred[valid].astype(np.float64)
    g = gt[valid].astype(np.float64)
    nonfinite = int((~np.isfinite(p)).sum())
    if nonfinite:
        p = np.where(np.isfinite(p), p, cfg.min_depth)
    if cfg.median_scaling:
        med_pred = float(np.median(p))
        if med_pred <= 0:
            raise ValidationError("median scaling needs a positive prediction median")
        p = p * (float(np.median(g)) / med_pred)
    p = np.clip(p, cfg.min_depth, cfg.max_depth)
    return p, g, nonfinite


def _metrics_from(p: np.ndarray, g: np.ndarray) -> dict[str, float]:
    ratio = np.maximum(g / p, p / g)
    return {
        "abs_rel": float(np.mean(np.abs(g - p) / g)),
        "rmse": float(np.sqrt(np.mean((g - p) ** 2))),
        "delta1": float(np.mean(ratio < 1.25) * 100.0),
        "delta2": float(np.mean(ratio < 1.25 ** 2) * 100.0),
        "delta3": float(np.mean(ratio < 1.25 ** 3) * 100.0),
    }


def evaluate_depth(pred: np.ndarray, gt: np.ndarray,
                   cfg: DepthConfig = DepthConfig()) -> DepthMetrics:
    """Score a single prediction/GT pair."""
    return evaluate_depth_set([pred], [gt], cfg)


def evaluate_depth_set(preds, gts, cfg: DepthConfig = DepthConfig()) -> DepthMetrics:
    """Score a dataset; macro (default) or micro averaging per cfg."""
    if len(preds) != len(gts) or not preds:
        raise ValidationError("need equally many predictions and ground truths (>= 1)")
    per_image = []
    pooled_p, pooled_g = [], []
    skipped = 0
    nonfinite_total = 0
    valid_total = 0
    for pred, gt in zip(preds, gts):
        arrays = _image_arrays(np.asarray(pred), np.asarray(gt), cfg)
        if arrays is None:
            skipped += 1
            continue
        p, g, nonfinite = arrays
        nonfinite_total += nonfinite
        valid_total += p.size
        if cfg.micro_average:
            pooled_p.append(p)
            pooled_g.append(g)
        else:
            per_image.append(_metrics_from(p, g))
    if skipped == len(preds):
        raise MetricUndefinedError("no image has any valid ground-truth pixel")

    if cfg.micro_average:
        vals = _metrics_from(np.concatenate(pooled_p), np.concatenate(pooled_g))
    else:
        vals = {k: sum(m[k] for m in per_image) / len(per_image)
                for k in per_image[0]}
    return DepthMetrics(**vals, valid_pixels=valid_total, skipped_images=skipped,
                        nonfinite_pred_pixels=nonfinite_total)
