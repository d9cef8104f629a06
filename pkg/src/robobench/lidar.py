"""LiDAR failure modes: point dropping, angular restriction, beam dropping.

All three are pure filters: the output is a subsequence of the input rows
with coordinates and intensity bit-identical, never mutated or re-created.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import make_rng
from .errors import ValidationError

POINT_RECORD_FLOATS = 5  # x, y, z, intensity, ring


class RingInferenceWarning(UserWarning):
    """Raised-as-warning when ring inference hits a degenerate cloud."""


@dataclass(frozen=True)
class PointCloud:
    """Point records as an (N, 4) or (N, 5) float32 array.

    Columns are x, y, z, intensity and, when present, ring (an integral
    beam index stored as float32, matching the on-disk layout).
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.dtype != np.float32 or d.ndim != 2:
            raise ValidationError("point cloud must be a 2-D float32 array")
        if d.shape[1] not in (4, POINT_RECORD_FLOATS):
            raise ValidationError(
                f"point cloud needs 4 or 5 columns (x, y, z, intensity[, ring]), "
                f"got {d.shape[1]}")
        if d.size and not np.isfinite(d).all():
            raise ValidationError("point cloud contains non-finite values")
        if self.has_ring and len(d):
            rings = d[:, 4]
            if (rings < 0).any() or (rings != np.rint(rings)).any():
                raise ValidationError("ring column must hold non-negative integers")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def has_ring(self) -> bool:
        return self.data.shape[1] == POINT_RECORD_FLOATS

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    @property
    def rings(self) -> np.ndarray:
        if not self.has_ring:
            raise ValidationError("point cloud has no ring column")
        return self.data[:, 4].astype(np.int64)

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.data[mask])


@dataclass(frozen=True)
class AngularWindow:
    """Kept azimuth range: circular distance to center at most width / 2."""

    center_deg: float
    width_deg: float

    def __post_init__(self):
        if not 0.0 <= self.center_deg < 360.0:
            raise ValidationError(f"window center {self.center_deg} outside [0, 360)")
        if not 0.0 < self.width_deg <= 360.0:
            raise ValidationError(f"window width {self.width_deg} outside (0, 360]")


def drop_points(pc: PointCloud, drop_rate: float, seed: int) -> PointCloud:
    """Drop each point independently with probability drop_rate."""
    if not 0.0 <= drop_rate <= 1.0:
        raise ValidationError(f"drop rate {drop_rate} outside [0, 1]")
    rng = make_rng(seed)
    keep = rng.random(len(pc)) >= drop_rate
    return pc.select(keep)


def azimuth_deg(pc: PointCloud) -> np.ndarray:
    """Counterclockwise angle from +x (ego forward), in [0, 360)."""
    az = np.degrees(np.arctan2(pc.data[:, 1], pc.data[:, 0]))
    return np.mod(az, 360.0)


def restrict_angular(pc: PointCloud, window: AngularWindow) -> PointCloud:
    """Keep exactly the points whose azimuth falls inside the window."""
    az = azimuth_deg(pc)
    circ = np.abs(np.mod(az - window.center_deg + 180.0, 360.0) - 180.0)
    return pc.select(circ <= window.width_deg / 2.0)


def drop_beams(pc: PointCloud, beams_to_drop=None, *, count: int | None = None,
               seed: int | None = None) -> PointCloud:
    """Remove all points whose ring is in the dropped set.

    Either pass the explicit set, or ask for `count` beams sampled without
    replacement (seeded) from the rings present in the cloud.
    """
    if (beams_to_drop is None) == (count is None):
        raise ValidationError("pass exactly one of beams_to_drop or count")
    if not pc.has_ring:
        raise ValidationError("point cloud has no ring column; run infer_rings first")
    rings = pc.rings
    if count is not None:
        if seed is None:
            raise ValidationError("count-based beam dropping needs a seed")
        present = np.unique(rings)
        if not 0 <= count <= len(present):
            raise ValidationError(
                f"cannot drop {count} beams; cloud has {len(present)} distinct rings")
        chosen = make_rng(seed).choice(present, size=count, replace=False)
        beams = set(int(b) for b in chosen)
    else:
        beams = set(int(b) for b in beams_to_drop)
        num_beams = int(rings.max()) + 1 if len(rings) else 0
        bad = sorted(b for b in beams if b < 0 or b >= num_beams)
        if bad:
            raise ValidationError(
                f"beam indices {bad} out of range [0, {num_beams})")
    if not beams:
        return pc.select(np.ones(len(pc), dtype=bool))
    keep = ~np.isin(rings, sorted(beams))
    return pc.select(keep)


def infer_rings(pc: PointCloud, num_beams: int) -> PointCloud:
    """Assign ring indices by binning elevation angle into num_beams bins.

    Bin boundaries are the sorted-elevation quantiles k/num_beams; points
    with identical elevation always land in the same ring. A cloud whose
    points all share one elevation gets ring 0 plus a RingInferenceWarning.
    """
    if len(pc) == 0:
        raise ValidationError("cannot infer rings on an empty cloud")
    if num_beams < 1:
        raise ValidationError(f"num_beams must be >= 1, got {num_beams}")
    rng_range = np.linalg.norm(pc.xyz.astype(np.float64), axis=1)
    if (rng_range == 0).any():
        raise ValidationError("zero-range point has no elevation angle")
    elev = np.arcsin(pc.data[:, 2].astype(np.float64) / rng_range)

    if num_beams == 1 or np.all(elev == elev[0]):
        if num_beams > 1:
            warnings.warn("all points share one elevation; assigning ring 0",
                          RingInferenceWarning)
        ring_col = np.zeros((len(pc), 1), dtype=np.float32)
    else:
        n = len(elev)
        sorted_elev = np.sort(elev)
        boundaries = sorted_elev[[(k * n) // num_beams for k in range(1, num_beams)]]
        rings = np.searchsorted(boundaries, elev, side="right")
        ring_col = rings.astype(np.float32)[:, None]
    return PointCloud(np.hstack([pc.data[:, :4], ring_col]))
