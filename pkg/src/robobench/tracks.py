"""The five evaluation tracks and their headline metrics."""

from __future__ import annotations

import enum

from .errors import ValidationError


class Track(enum.Enum):
    BEV_DETECTION = "bev_detection"
    MAP_SEGMENTATION = "map_segmentation"
    OCCUPANCY = "occupancy"
    DEPTH = "depth"
    MULTIMODAL_DETECTION = "multimodal_detection"

    def __str__(self) -> str:
        return self.value

    @property
    def metric_name(self) -> str:
        if self in (Track.BEV_DETECTION, Track.MULTIMODAL_DETECTION):
            return "nds"
        if self in (Track.MAP_SEGMENTATION, Track.OCCUPANCY):
            return "miou"
        return "abs_rel"

    @property
    def higher_is_better(self) -> bool:
        # Abs Rel is an error rate: lower ranks first
        return self is not Track.DEPTH

    @property
    def uses_lidar(self) -> bool:
        return self is Track.MULTIMODAL_DETECTION


def parse_track(name: str) -> Track:
    for t in Track:
        if t.value == name:
            return t
    valid = ", ".join(t.value for t in Track)
    raise ValidationError(f"unknown track {name!r}; valid tracks: {valid}")
