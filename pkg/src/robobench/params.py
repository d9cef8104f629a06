"""Severity-to-parameter table.

The canonical table ships inside the package (``data/params.json``) and is
versioned: changing any value is a breaking change because it invalidates
previously published scores. A different table may be supplied per run via
``--params`` or the ``ROBOBENCH_PARAMS`` environment variable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import CAMERA_CORRUPTIONS, LIDAR_FAILURES, MAX_SEVERITY, CorruptionType
from .errors import ValidationError

PARAMS_ENV_VAR = "ROBOBENCH_PARAMS"

# SHA-256 of the embedded canonical table; selftest verifies the active
# table against this to catch tampering.
CANONICAL_PARAMS_SHA256 = "c5c8e51e6772a4ebb274da2f29d83e5f6fef76c9b3935669193755c2c5bdd93a"


@dataclass(frozen=True)
class ParamsTable:
    table_version: int
    camera: dict[str, dict]
    lidar: dict[str, dict]
    sha256: str
    source: str

    def level(self, corruption: CorruptionType, severity: int) -> dict:
        """Parameter record for one (corruption, severity 1..5) cell."""
        if not 1 <= severity <= MAX_SEVERITY:
            raise ValidationError(f"no parameter row for severity {severity}")
        section = self.camera if corruption.is_camera else self.lidar
        try:
            return section[corruption.value]["levels"][severity - 1]
        except KeyError:
            raise ValidationError(
                f"params table has no entry for corruption {corruption.value!r}"
            ) from None

    def lidar_default_num_beams(self) -> int:
        return int(self.lidar["lidar_beam_drop"].get("default_num_beams", 32))


def _validate_section(section: dict, expected: tuple[CorruptionType, ...], name: str) -> None:
    expected_tags = {c.value for c in expected}
    if set(section) != expected_tags:
        missing = sorted(expected_tags - set(section))
        extra = sorted(set(section) - expected_tags)
        raise ValidationError(
            f"params table {name} section mismatch: missing={missing} extra={extra}"
        )
    for tag, block in section.items():
        levels = block.get("levels")
        if not isinstance(levels, list) or len(levels) != MAX_SEVERITY:
            raise ValidationError(f"{tag}: expected {MAX_SEVERITY} severity levels")
        mono = block.get("monotone")
        if not mono or "key" not in mono:
            raise ValidationError(f"{tag}: missing monotone descriptor")
        key = mono["key"]
        values = []
        for i, level in enumerate(levels):
            if key not in level:
                raise ValidationError(f"{tag}: level {i + 1} missing key {key!r}")
            values.append(float(level[key]))
        pairs = zip(values, values[1:])
        ok = all(b <= a for a, b in pairs) if mono.get("decreasing") else all(
            a <= b for a, b in zip(values, values[1:]))
        if not ok:
            raise ValidationError(
                f"{tag}: {key} must be monotone "
                f"({'non-increasing' if mono.get('decreasing') else 'non-decreasing'}), "
                f"got {values}")


def _parse(raw: bytes, source: str) -> ParamsTable:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ValidationError(f"params table {source}: invalid JSON: {e}") from None
    if not isinstance(doc, dict) or "camera" not in doc or "lidar" not in doc:
        raise ValidationError(f"params table {source}: expected camera and lidar sections")
    _validate_section(doc["camera"], CAMERA_CORRUPTIONS, "camera")
    _validate_section(doc["lidar"], LIDAR_FAILURES, "lidar")
    return ParamsTable(
        table_version=int(doc.get("table_version", 0)),
        camera=doc["camera"],
        lidar=doc["lidar"],
        sha256=hashlib.sha256(raw).hexdigest(),
        source=source,
    )


def embedded_params_bytes() -> bytes:
    return resources.files("robobench").joinpath("data/params.json").read_bytes()


def load_params(path: str | os.PathLike | None = None) -> ParamsTable:
    """Load the active table: explicit path > $ROBOBENCH_PARAMS > embedded."""
    if path is None:
        path = os.environ.get(PARAMS_ENV_VAR) or None
    if path is None:
        return _parse(embedded_params_bytes(), "embedded")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"params table not found: {p}")
    return _parse(p.read_bytes(), str(p))
