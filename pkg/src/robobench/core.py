"""Corruption identifiers, severity model, and deterministic seed derivation.

All types here are immutable and all functions are pure; they can be used
freely from any number of threads.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import ValidationError

MAX_SEVERITY = 5

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF
_SEP = "\x1f"


class CorruptionType(enum.Enum):
    """Canonical corruption tags. The string values are the wire names used
    in manifests, submissions, CLI flags, and report columns."""

    # camera
    BRIGHTNESS = "brightness"
    LOW_LIGHT = "low_light"
    FOG = "fog"
    FROST = "frost"
    SNOW = "snow"
    CONTRAST = "contrast"
    DEFOCUS_BLUR = "defocus_blur"
    GLASS_BLUR = "glass_blur"
    MOTION_BLUR = "motion_blur"
    ZOOM_BLUR = "zoom_blur"
    ELASTIC_TRANSFORM = "elastic_transform"
    QUANTIZATION = "quantization"
    GAUSSIAN_NOISE = "gaussian_noise"
    IMPULSE_NOISE = "impulse_noise"
    SHOT_NOISE = "shot_noise"
    ISO_NOISE = "iso_noise"
    PIXELATE = "pixelate"
    JPEG_COMPRESSION = "jpeg_compression"
    # lidar
    LIDAR_POINTS_DROP = "lidar_points_drop"
    LIDAR_ANGULAR_RESTRICT = "lidar_angular_restrict"
    LIDAR_BEAM_DROP = "lidar_beam_drop"
    # identity
    CLEAN = "clean"

    def __str__(self) -> str:
        return self.value

    @property
    def is_camera(self) -> bool:
        return self in CAMERA_CORRUPTIONS

    @property
    def is_lidar(self) -> bool:
        return self in LIDAR_FAILURES


CAMERA_CORRUPTIONS: tuple[CorruptionType, ...] = tuple(
    c for c in CorruptionType
    if c not in (CorruptionType.LIDAR_POINTS_DROP,
                 CorruptionType.LIDAR_ANGULAR_RESTRICT,
                 CorruptionType.LIDAR_BEAM_DROP,
                 CorruptionType.CLEAN)
)

LIDAR_FAILURES: tuple[CorruptionType, ...] = (
    CorruptionType.LIDAR_POINTS_DROP,
    CorruptionType.LIDAR_ANGULAR_RESTRICT,
    CorruptionType.LIDAR_BEAM_DROP,
)

assert len(CAMERA_CORRUPTIONS) == 18
assert len(LIDAR_FAILURES) == 3


def parse_corruption(name: str) -> CorruptionType:
    """Map a wire name back to its tag; round-trips with str()."""
    for c in CorruptionType:
        if c.value == name:
            return c
    valid = ", ".join(c.value for c in CorruptionType)
    raise ValidationError(f"unknown corruption {name!r}; valid tags: {valid}")


def validate_severity(level: int) -> int:
    """Severity is an integer in [0, 5]; 0 is the in-band identity level."""
    if not isinstance(level, int) or isinstance(level, bool):
        raise ValidationError(f"severity must be an integer, got {level!r}")
    if not 0 <= level <= MAX_SEVERITY:
        raise ValidationError(f"severity {level} outside [0, {MAX_SEVERITY}]")
    return level


def validate_sample_id(value: str) -> str:
    if not isinstance(value, str) or not value:
        raise ValidationError(f"sample id must be a non-empty string, got {value!r}")
    if "/" in value or "\\" in value:
        raise ValidationError(f"sample id {value!r} contains a path separator")
    return value


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; fixed constants, identical on every platform."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _U64_MASK
    return h


def derive_seed(global_seed: int, sample_id: str, corruption: CorruptionType,
                severity: int) -> int:
    """Per-(sample, corruption, severity) seed for all stochastic transforms.

    Defined as FNV-1a-64 over the UTF-8 bytes of the four fields joined with
    0x1F unit separators: ``{global_seed}\\x1f{sample_id}\\x1f{tag}\\x1f{level}``.
    Stable across runs, processes, and platforms.
    """
    if not 0 <= global_seed <= _U64_MASK:
        raise ValidationError(f"global seed {global_seed} outside u64 range")
    validate_sample_id(sample_id)
    validate_severity(severity)
    text = _SEP.join((str(global_seed), sample_id, corruption.value, str(severity)))
    return fnv1a64(text.encode("utf-8"))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a derived seed.

    Philox produces an identical stream on every platform, which is what
    makes corruption outputs bit-reproducible.
    """
    return np.random.Generator(np.random.Philox(key=seed))
