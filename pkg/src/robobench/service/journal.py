"""Append-only, checksummed event journal backing the scoring service.

Byte layout: the file starts with the 8-byte magic ``RBJRNL1\\n``; each
event is a uint32 LE payload length, a uint32 LE CRC-32 of the payload,
then the UTF-8 JSON payload. A torn tail (partial write from a crash) is
detected by the length/checksum and discarded on open, so replaying the
journal always reconstructs a consistent state.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from ..errors import JournalError

MAGIC = b"RBJRNL1\n"
_HEADER = struct.Struct("<II")


def replay(path) -> tuple[list[dict], int]:
    """Read all intact events; returns (events, offset of last good byte)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or not raw.startswith(MAGIC):
        raise JournalError(f"{path}: bad journal magic")
    events = []
    off = len(MAGIC)
    while True:
        if off + _HEADER.size > len(raw):
            break
        length, crc = _HEADER.unpack_from(raw, off)
        start = off + _HEADER.size
        end = start + length
        if end > len(raw):
            break
        payload = raw[start:end]
        if zlib.crc32(payload) != crc:
            break
        try:
            event = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            break
        if not isinstance(event, dict):
            break
        events.append(event)
        off = end
    return events, off


class JournalWriter:
    """Single-writer append handle; every event is flushed and fsynced."""

    def __init__(self, path):
        self.path = Path(path)
        if self.path.exists():
            _, good = replay(self.path)
            # drop any torn tail before appending new events after it
            if good < self.path.stat().st_size:
                with open(self.path, "r+b") as f:
                    f.truncate(good)
            self._f = open(self.path, "ab")
        else:
            self._f = open(self.path, "wb")
            self._f.write(MAGIC)
            self._flush()

    def append(self, event: dict) -> None:
        payload = json.dumps(event, separators=(",", ":")).encode("utf-8")
        self._f.write(_HEADER.pack(len(payload), zlib.crc32(payload)))
        self._f.write(payload)
        self._flush()

    def _flush(self) -> None:
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        self._f.close()
