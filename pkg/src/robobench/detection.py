"""3D detection scoring: per-class AP over distance thresholds, the five
true-positive error terms, and their NDS composition.

Matching follows the planar center-distance convention: predictions are
ranked by descending score (ties by input order) and greedily matched to
the nearest unmatched ground-truth box of the same class within the
threshold, per sample.

AP is the normalized clipped area under the precision-recall curve sampled
at the 101 recall points 0.00, 0.01, ..., 1.00: operating points after
each ranked prediction are collapsed to their final precision per distinct
recall, extended flat to the left and to zero beyond the highest recall,
then AP = mean over the samples with recall > min_recall of
max(0, precision - min_precision) / (1 - min_precision).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import validate_sample_id
from .errors import MetricUndefinedError, ValidationError

TP_METRIC_NAMES = ("ate", "ase", "aoe", "ave", "aae")


@dataclass(frozen=True)
class GtBox:
    sample_id: str
    translation: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float
    velocity: tuple[float, float]
    class_name: str
    attribute: str | None = None

    def __post_init__(self):
        validate_sample_id(self.sample_id)
        vals = (*self.translation, *self.size, self.yaw, *self.velocity)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"box for {self.sample_id!r} has non-finite values")
        if any(s <= 0 for s in self.size):
            raise ValidationError(
                f"box for {self.sample_id!r} has non-positive size {self.size}")


@dataclass(frozen=True)
class DetBox(GtBox):
    score: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValidationError(
                f"score {self.score} for {self.sample_id!r} outside [0, 1]")


@dataclass(frozen=True)
class DetectionConfig:
    class_names: tuple[str, ...]
    dist_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    tp_threshold: float = 2.0
    min_recall: float = 0.1
    min_precision: float = 0.1

    def __post_init__(self):
        if not self.class_names:
            raise ValidationError("class set must not be empty")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValidationError("duplicate class names in config")
        ths = self.dist_thresholds
        if not ths or any(t <= 0 for t in ths) or list(ths) != sorted(ths):
            raise ValidationError(f"thresholds must be positive ascending, got {ths}")
        if self.tp_threshold not in ths:
            raise ValidationError(
                f"tp_threshold {self.tp_threshold} not among thresholds {ths}")


@dataclass(frozen=True)
class TpErrors:
    ate: float
    ase: float
    aoe: float
    ave: float
    aae: float

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in TP_METRIC_NAMES}


@dataclass(frozen=True)
class MatchResult:
    """Ranked per-prediction outcomes for one (class, distance threshold)."""
    class_name: str
    dist_threshold: float
    ranked: tuple  # (DetBox, GtBox | None) in descending-score order
    num_gt: int

    @property
    def pairs(self) -> list:
        return [(p, g) for p, g in self.ranked if g is not None]


@dataclass(frozen=True)
class DetectionResult:
    ap: dict  # (class_name, dist_threshold) -> float
    mean_ap: float
    tp_errors: TpErrors
    nds: float
    included_classes: tuple[str, ...]
    excluded_classes: tuple[str, ...] = field(default_factory=tuple)


def _planar_dist(a, b) -> float:
    return math.hypot(a.translation[0] - b.translation[0],
                      a.translation[1] - b.translation[1])


def match_boxes(preds, gts, class_name: str, dist_threshold: float) -> MatchResult:
    """Greedy nearest-center matching; each GT box is used at most once."""
    if dist_threshold <= 0:
        raise ValidationError(f"distance threshold must be positive, got {dist_threshold}")
    order = sorted((i for i, p in enumerate(preds) if p.class_name == class_name),
                   key=lambda i: (-preds[i].score, i))
    cls_gts = [g for g in gts if g.class_name == class_name]

    taken = [False] * len(cls_gts)
    ranked = []
    for i in order:
        pred = preds[i]
        best_j, best_d = None, None
        for j, gt in enumerate(cls_gts):
            if taken[j] or gt.sample_id != pred.sample_id:
                continue
            d = _planar_dist(pred, gt)
            if d <= dist_threshold and (best_d is None or d < best_d):
                best_j, best_d = j, d
        if best_j is None:
            ranked.append((pred, None))
        else:
            taken[best_j] = True
            ranked.append((pred, cls_gts[best_j]))
    return MatchResult(class_name, dist_threshold, tuple(ranked), len(cls_gts))


def _curve_points(match: MatchResult) -> list[tuple[float, float]]:
    points: list[tuple[float, float]] = []
    tp = 0
    for k, (_, gt) in enumerate(match.ranked, start=1):
        if gt is not None:
            tp += 1
        r, p = tp / match.num_gt, tp / k
        if points and points[-1][0] == r:
            points[-1] = (r, p)
        else:
            points.append((r, p))
    return points


def _precision_at(points: list[tuple[float, float]], r: float) -> float:
    if not points:
        return 0.0
    if r <= points[0][0]:
        return points[0][1]
    if r > points[-1][0]:
        return 0.0
    lo, hi = 0, len(points) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if points[mid][0] < r:
            lo = mid
        else:
            hi = mid
    r0, p0 = points[lo]
    r1, p1 = points[hi]
    return p0 + (p1 - p0) * (r - r0) / (r1 - r0)


def average_precision(match: MatchResult, config: DetectionConfig) -> float:
    """Normalized clipped area; requires num_gt > 0 (absent classes are the
    caller's concern)."""
    if match.num_gt == 0:
        raise MetricUndefinedError(
            f"AP undefined for class {match.class_name!r} with no ground truth")
    points = _curve_points(match)
    first = round(100 * config.min_recall) + 1
    total = 0.0
    for i in range(first, 101):
        total += max(0.0, _precision_at(points, i / 100.0) - config.min_precision)
    ap = total / (101 - first) / (1.0 - config.min_precision)
    return min(1.0, max(0.0, ap))  # guard accumulated rounding at the ends


def _size_iou(a: tuple, b: tuple) -> float:
    inter = min(a[0], b[0]) * min(a[1], b[1]) * min(a[2], b[2])
    va = a[0] * a[1] * a[2]
    vb = b[0] * b[1] * b[2]
    return inter / (va + vb - inter)


def _yaw_diff(a: float, b: float) -> float:
    d = (a - b) % (2.0 * math.pi)
    return abs(2.0 * math.pi - d if d > math.pi else d)


def tp_errors(match: MatchResult) -> TpErrors:
    """Mean per-pair errors for one class; no matches at all scores 1.0."""
    pairs = match.pairs
    if not pairs:
        return TpErrors(1.0, 1.0, 1.0, 1.0, 1.0)
    n = len(pairs)
    ate = sum(_planar_dist(p, g) for p, g in pairs) / n
    ase = sum(1.0 - _size_iou(p.size, g.size) for p, g in pairs) / n
    aoe = sum(_yaw_diff(p.yaw, g.yaw) for p, g in pairs) / n
    ave = sum(math.hypot(p.velocity[0] - g.velocity[0],
                         p.velocity[1] - g.velocity[1]) for p, g in pairs) / n
    aae = sum(0.0 if p.attribute == g.attribute else 1.0 for p, g in pairs) / n
    return TpErrors(ate, ase, aoe, ave, aae)


def nds(mean_ap: float, tp: TpErrors) -> float:
    """Composite score: (5 mAP + sum of (1 - min(1, error))) / 10."""
    if not 0.0 <= mean_ap <= 1.0:
        raise ValidationError(f"mAP {mean_ap} outside [0, 1]")
    acc = 5.0 * mean_ap
    for name in TP_METRIC_NAMES:
        err = getattr(tp, name)
        if err < 0:
            raise ValidationError(f"negative TP error {name}={err}")
        acc += 1.0 - min(1.0, err)
    return acc / 10.0


def evaluate_detection(preds, gts, config: DetectionConfig,
                       sample_ids=None) -> DetectionResult:
    """Full scoring pass: AP over classes x thresholds, TP errors at the TP
    threshold, NDS.

    Classes with no ground truth anywhere are excluded from every average.
    Samples in `sample_ids` (default: the GT's samples) with no predictions
    simply contribute misses.
    """
    unknown = sorted({p.class_name for p in preds} - set(config.class_names))
    if unknown:
        raise ValidationError(f"predictions use unknown class names: {unknown}")
    universe = set(sample_ids) if sample_ids is not None else {g.sample_id for g in gts}
    stray = sorted({p.sample_id for p in preds} - universe)
    if stray:
        raise ValidationError(f"predictions reference unknown samples: {stray}")
    missing_gt = sorted({g.sample_id for g in gts} - universe)
    if missing_gt:
        raise ValidationError(f"ground truth references unknown samples: {missing_gt}")

    gt_classes = {g.class_name for g in gts}
    included = tuple(c for c in config.class_names if c in gt_classes)
    excluded = tuple(c for c in config.class_names if c not in gt_classes)
    if not included:
        raise MetricUndefinedError("no ground-truth boxes for any configured class")

    ap: dict = {}
    per_class_errors = []
    for c in included:
        for d in config.dist_thresholds:
            ap[(c, d)] = average_precision(match_boxes(preds, gts, c, d), config)
        per_class_errors.append(tp_errors(match_boxes(preds, gts, c, config.tp_threshold)))

    mean_ap = sum(ap.values()) / len(ap)
    means = {name: sum(getattr(e, name) for e in per_class_errors) / len(per_class_errors)
             for name in TP_METRIC_NAMES}
    tp = TpErrors(**means)
    return DetectionResult(ap=ap, mean_ap=mean_ap, tp_errors=tp,
                           nds=nds(mean_ap, tp), included_classes=included,
                           excluded_classes=excluded)
