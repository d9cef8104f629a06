"""Confusion-matrix IoU / mIoU over 2-D label maps and 3-D voxel grids.

The same counts drive both map segmentation and semantic occupancy; grids
only differ in rank. Cells whose ground-truth label equals the ignore
value never enter the counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError, ValidationError

DEFAULT_IGNORE = 255


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are ground-truth classes, columns predictions."""

    num_classes: int
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValidationError("need at least one class")
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        elif self.counts.shape != (self.num_classes, self.num_classes):
            raise ValidationError("counts shape does not match num_classes")

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValidationError("cannot merge matrices of different sizes")
        self.counts += other.counts
        return self


def _check_labels(arr: np.ndarray, name: str, num_classes: int, ignore_value: int):
    if not isinstance(arr, np.ndarray) or arr.ndim not in (2, 3):
        raise ValidationError(f"{name} grid must be a 2-D or 3-D array")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"{name} grid must hold integer labels")
    bad = (arr < 0) | ((arr >= num_classes) & (arr != ignore_value))
    if bad.any():
        offending = np.unique(arr[bad])[:8].tolist()
        raise ValidationError(
            f"{name} grid has labels outside [0, {num_classes}) "
            f"(ignore={ignore_value}): {offending}")


def accumulate(cm: ConfusionMatrix, pred: np.ndarray, gt: np.ndarray,
               ignore_value: int = DEFAULT_IGNORE) -> ConfusionMatrix:
    """Add one pred/gt grid pair into the counts; associative over batches."""
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    k = cm.num_classes
    _check_labels(gt, "gt", k, ignore_value)
    _check_labels(pred, "pred", k, ignore_value)
    valid = gt != ignore_value
    p = pred[valid].astype(np.int64)
    g = gt[valid].astype(np.int64)
    if ignore_value >= k and (p == ignore_value).any():
        raise ValidationError("prediction uses the ignore value at a counted cell")
    cm.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return cm


def iou_per_class(cm: ConfusionMatrix) -> list[float | None]:
    """IoU_i = TP_i / (TP_i + FP_i + FN_i); None marks an absent class."""
    tp = np.diag(cm.counts)
    denom = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    out: list[float | None] = []
    for i in range(cm.num_classes):
        out.append(float(tp[i] / denom[i]) if denom[i] > 0 else None)
    return out


def miou(cm: ConfusionMatrix, included_classes=None) -> float:
    """Mean IoU over included, present classes; absent classes are skipped."""
    ious = iou_per_class(cm)
    if included_classes is None:
        included_classes = range(cm.num_classes)
    included = list(included_classes)
    if any(i < 0 or i >= cm.num_classes for i in included):
        raise ValidationError("included class id out of range")
    present = [ious[i] for i in included if ious[i] is not None]
    if not present:
        raise MetricUndefinedError("mIoU undefined: every included class is absent")
    return float(sum(present) / len(present))


def probabilities_to_labels(probs: np.ndarray, threshold: float = 0.5,
                            background: int = 0) -> np.ndarray:
    """Convert per-class probability channels (K, ...) to labels.

    Multi-hot conflicts resolve to the highest probability; cells where no
    class reaches the threshold fall back to the background class.
    """
    if probs.ndim < 2:
        raise ValidationError("expected (K, ...) probability channels")
    labels = probs.argmax(axis=0).astype(np.int64)
    labels[probs.max(axis=0) < threshold] = background
    return labels
