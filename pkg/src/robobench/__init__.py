"""robobench: corruption synthesis and robustness scoring for driving
perception benchmarks."""

__version__ = "0.1.0"

from .core import (CAMERA_CORRUPTIONS, LIDAR_FAILURES, CorruptionType,
                   derive_seed, parse_corruption)
from .errors import (CodecError, JournalError, MetricUndefinedError,
                     RobobenchError, ValidationError)
from .tracks import Track, parse_track

__all__ = [
    "__version__",
    "CAMERA_CORRUPTIONS",
    "LIDAR_FAILURES",
    "CorruptionType",
    "derive_seed",
    "parse_corruption",
    "CodecError",
    "JournalError",
    "MetricUndefinedError",
    "RobobenchError",
    "ValidationError",
    "Track",
    "parse_track",
]
