"""File formats: PNG images, point-cloud .bin, the grid container, depth
maps, manifests, and submission files.

Byte layouts (all integers little-endian):

* point cloud ``.bin``: float32 records of x, y, z, intensity, ring (ring
  integral-valued); file length must be a multiple of 20 bytes;
* grid container: magic ``RBGRID1``, 1 dtype byte (0=u8 1=u16 2=i32
  3=f32), 1 ndim byte (2 or 3), ndim x uint32 dims, uint32 ignore value,
  then the raw C-order payload;
* manifest: one JSON document (see README for the schema);
* submission: JSON lines; first line is a header record with
  schema_version / track / team, each further line one prediction record.

Every reader raises a structured error (ValidationError / CodecError) on
malformed input; none of them crash on arbitrary bytes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .core import CorruptionType, parse_corruption, validate_sample_id, validate_severity
from .detection import DetBox, GtBox
from .errors import CodecError, ValidationError
from .lidar import POINT_RECORD_FLOATS, PointCloud
from .tracks import Track, parse_track

SCHEMA_VERSION = 1
GRID_MAGIC = b"RBGRID1"
_GRID_DTYPES = {0: np.uint8, 1: np.uint16, 2: np.int32, 3: np.float32}
_GRID_CODES = {np.dtype(v): k for k, v in _GRID_DTYPES.items()}
DEPTH_PNG_SCALE = 256.0  # stored uint16 value / 256 = meters


# ------------------------------------------------------------------ images

def read_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as (H, W, 3) uint8."""
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise ValidationError(f"{path}: expected PNG, got {im.format}")
            if im.mode != "RGB":
                raise ValidationError(
                    f"{path}: expected 8-bit RGB, got mode {im.mode}; "
                    f"convert with Image.convert('RGB') before use")
            return np.asarray(im, dtype=np.uint8)
    except (ValidationError, CodecError):
        raise
    except Exception as e:  # decode boundary: arbitrary bytes must not crash
        raise CodecError(f"{path}: cannot decode PNG: {e}") from None


def write_image(img: np.ndarray, path) -> None:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("write_image requires a (H, W, 3) uint8 array")
    PILImage.fromarray(img, mode="RGB").save(path, format="PNG")


# ------------------------------------------------------------ point clouds

def read_pointcloud(path) -> PointCloud:
    raw = Path(path).read_bytes()
    record = 4 * POINT_RECORD_FLOATS
    if len(raw) % record != 0:
        raise CodecError(
            f"{path}: length {len(raw)} is not a multiple of {record} bytes")
    arr = np.frombuffer(raw, dtype="<f4").reshape(-1, POINT_RECORD_FLOATS)
    arr = np.ascontiguousarray(arr).astype(np.float32, copy=False)
    if arr.size and not np.isfinite(arr).all():
        raise CodecError(f"{path}: non-finite values in point records")
    if arr.size and ((arr[:, 4] < 0).any() or (arr[:, 4] != np.rint(arr[:, 4])).any()):
        raise CodecError(f"{path}: ring column must hold non-negative integers")
    return PointCloud(arr)


def write_pointcloud(pc: PointCloud, path) -> None:
    if not pc.has_ring:
        raise ValidationError(
            "the .bin layout stores 5 floats per point; add rings (infer_rings) first")
    Path(path).write_bytes(np.ascontiguousarray(pc.data, dtype="<f4").tobytes())


# ------------------------------------------------------------------- grids

def write_grid(arr: np.ndarray, path, ignore_value: int = 255) -> None:
    if arr.ndim not in (2, 3):
        raise ValidationError("grid must be 2-D or 3-D")
    code = _GRID_CODES.get(arr.dtype)
    if code is None:
        raise ValidationError(
            f"unsupported grid dtype {arr.dtype}; use u8, u16, i32, or f32")
    header = GRID_MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<I", ignore_value)
    Path(path).write_bytes(header + np.ascontiguousarray(arr).tobytes())


def read_grid(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if len(raw) < len(GRID_MAGIC) + 2 or not raw.startswith(GRID_MAGIC):
        raise CodecError(f"{path}: not a grid container (bad magic)")
    off = len(GRID_MAGIC)
    code, ndim = struct.unpack_from("<BB", raw, off)
    off += 2
    if code not in _GRID_DTYPES:
        raise CodecError(f"{path}: unknown dtype code {code}")
    if ndim not in (2, 3):
        raise CodecError(f"{path}: grids are 2-D or 3-D, header says {ndim}-D")
    if len(raw) < off + 4 * ndim + 4:
        raise CodecError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    ignore_value = struct.unpack_from("<I", raw, off)[0]
    off += 4
    dtype = np.dtype(_GRID_DTYPES[code]).newbyteorder("<")
    expected = math.prod(dims) * dtype.itemsize
    if len(raw) != off + expected:
        raise CodecError(
            f"{path}: payload is {len(raw) - off} bytes, dims {dims} need {expected}")
    arr = np.frombuffer(raw, dtype=dtype, offset=off).reshape(dims)
    return arr.astype(dtype.newbyteorder("=")), int(ignore_value)


# -------------------------------------------------------------- depth maps

def read_depth(path) -> np.ndarray:
    """Depth in meters from a 16-bit PNG (value/256) or a float32 grid."""
    p = Path(path)
    if p.suffix.lower() == ".png":
        try:
            with PILImage.open(p) as im:
                if im.format != "PNG" or im.mode not in ("I;16", "I"):
                    raise ValidationError(
                        f"{p}: depth PNGs must be 16-bit grayscale, got "
                        f"{im.format}/{im.mode}")
                return np.asarray(im, dtype=np.float32) / DEPTH_PNG_SCALE
        except (ValidationError, CodecError):
            raise
        except Exception as e:  # decode boundary: arbitrary bytes must not crash
            raise CodecError(f"{p}: cannot decode PNG: {e}") from None
    arr, _ = read_grid(p)
    if arr.dtype != np.float32 or arr.ndim != 2:
        raise ValidationError(f"{p}: depth grids must be 2-D float32")
    return arr


def write_depth(arr: np.ndarray, path) -> None:
    p = Path(path)
    if arr.ndim != 2:
        raise ValidationError("depth maps are 2-D")
    if p.suffix.lower() == ".png":
        scaled = np.round(np.asarray(arr, dtype=np.float64) * DEPTH_PNG_SCALE)
        if (scaled < 0).any() or (scaled > 65535).any():
            raise ValidationError("depth out of range for 16-bit PNG encoding")
        PILImage.fromarray(scaled.astype(np.uint16)).save(p, format="PNG")
    else:
        write_grid(arr.astype(np.float32), p)


# --------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestSample:
    sample_id: str
    cameras: dict[str, str]
    corruption: CorruptionType
    severity: int
    lidar: str | None = None
    gt: str | None = None


@dataclass(frozen=True)
class Manifest:
    track: Track
    samples: tuple[ManifestSample, ...]
    root: Path
    classes: tuple[str, ...] | None = None
    empty_class_id: int | None = None

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]


def _required(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing required field {key!r}")
    return obj[key]


def load_manifest(path, check_files: bool = True) -> Manifest:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"cannot read manifest {p}: {e}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ValidationError(f"{p}: invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{p}: manifest must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{p}: unsupported schema_version {version!r}")
    track = parse_track(str(_required(doc, "track", str(p))))
    raw_samples = _required(doc, "samples", str(p))
    if not isinstance(raw_samples, list) or not raw_samples:
        raise ValidationError(f"{p}: samples must be a non-empty list")

    samples = []
    seen: set[str] = set()
    for idx, rec in enumerate(raw_samples):
        where = f"{p}: samples[{idx}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: expected an object")
        sid = validate_sample_id(_required(rec, "sample_id", where))
        if sid in seen:
            raise ValidationError(f"{where}: duplicate sample_id {sid!r}")
        seen.add(sid)
        corruption = parse_corruption(str(_required(rec, "corruption", where)))
        severity = _required(rec, "severity", where)
        try:
            validate_severity(severity)
        except ValidationError as e:
            raise ValidationError(f"{where}: {e}") from None

        cameras = rec.get("cameras", {})
        if not isinstance(cameras, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in cameras.items()):
            raise ValidationError(f"{where}: cameras must map camera name to path")
        lidar = rec.get("lidar")
        if lidar is not None and not isinstance(lidar, str):
            raise ValidationError(f"{where}: lidar must be a path string")
        gt = rec.get("gt")
        if gt is not None and not isinstance(gt, str):
            raise ValidationError(f"{where}: gt must be a path string")

        if corruption is CorruptionType.CLEAN and severity != 0:
            raise ValidationError(f"{where}: corruption 'clean' requires severity 0")
        if corruption.is_lidar and not track.uses_lidar:
            raise ValidationError(
                f"{where}: {corruption.value} is a LiDAR failure but track "
                f"{track.value} has no LiDAR modality")

        samples.append(ManifestSample(sample_id=sid, cameras=dict(cameras),
                                      corruption=corruption, severity=severity,
                                      lidar=lidar, gt=gt))

    classes = doc.get("classes")
    if classes is not None and (not isinstance(classes, list) or not all(
            isinstance(c, str) for c in classes)):
        raise ValidationError(f"{p}: classes must be a list of strings")
    manifest = Manifest(track=track, samples=tuple(samples), root=p.parent.resolve(),
                        classes=tuple(classes) if classes else None,
                        empty_class_id=doc.get("empty_class_id"))
    if check_files:
        for s in manifest.samples:
            for rel in [*s.cameras.values(),
                        *([s.lidar] if s.lidar else []),
                        *([s.gt] if s.gt else [])]:
                if not manifest.resolve(rel).is_file():
                    raise ValidationError(
                        f"{p}: sample {s.sample_id!r} references missing file {rel}")
    return manifest


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "track": manifest.track.value,
        "samples": [],
    }
    if manifest.classes:
        doc["classes"] = list(manifest.classes)
    if manifest.empty_class_id is not None:
        doc["empty_class_id"] = manifest.empty_class_id
    for s in manifest.samples:
        rec = {"sample_id": s.sample_id, "cameras": s.cameras,
               "corruption": s.corruption.value, "severity": s.severity}
        if s.lidar is not None:
            rec["lidar"] = s.lidar
        if s.gt is not None:
            rec["gt"] = s.gt
        doc["samples"].append(rec)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ------------------------------------------------------------- submissions

@dataclass(frozen=True)
class Submission:
    track: Track
    team: str
    method: str
    boxes: dict | None  # sample_id -> list[DetBox], detection tracks
    files: dict | None  # sample_id -> path string, grid/depth tracks
    root: Path

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


def _parse_box(rec: dict, where: str, with_score: bool):
    def fetch(key, kind, length=None):
        val = _required(rec, key, where)
        if length is not None:
            if not isinstance(val, list) or len(val) != length or not all(
                    isinstance(x, (int, float)) for x in val):
                raise ValidationError(
                    f"{where}: {key} must be a list of {length} numbers")
            return tuple(float(x) for x in val)
        if kind is float and not isinstance(val, (int, float)):
            raise ValidationError(f"{where}: {key} must be a number")
        if kind is str and not isinstance(val, str):
            raise ValidationError(f"{where}: {key} must be a string")
        return kind(val)

    try:
        common = dict(
            sample_id=fetch("sample_id", str),
            translation=fetch("translation", None, 3),
            size=fetch("size", None, 3),
            yaw=fetch("yaw", float),
            velocity=fetch("velocity", None, 2),
            class_name=fetch("class_name", str),
            attribute=rec.get("attribute"),
        )
        if common["attribute"] is not None and not isinstance(common["attribute"], str):
            raise ValidationError(f"{where}: attribute must be a string or null")
        if with_score:
            return DetBox(**common, score=fetch("score", float))
        return GtBox(**common)
    except ValidationError as e:
        msg = str(e)
        raise ValidationError(msg if msg.startswith(where) else f"{where}: {msg}") from None


def read_gt_boxes(path) -> list[GtBox]:
    """Ground-truth boxes: JSON lines of GtBox records (no header)."""
    boxes = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        where = f"{path}:{ln}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{where}: invalid JSON: {e}") from None
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: expected an object")
        boxes.append(_parse_box(rec, where, with_score=False))
    return boxes


def parse_submission_text(text: str, track: Track, known_ids=None,
                          root: Path | None = None,
                          source: str = "submission") -> Submission:
    lines = text.splitlines()
    stripped = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not stripped:
        raise ValidationError(f"{source}: empty submission")

    first_no, first = stripped[0]
    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{source}:{first_no}: invalid JSON header: {e}") from None
    if not isinstance(header, dict):
        raise ValidationError(f"{source}:{first_no}: header must be an object")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"{source}:{first_no}: unsupported schema_version "
            f"{header.get('schema_version')!r}")
    declared = header.get("track")
    if declared != track.value:
        raise ValidationError(
            f"{source}:{first_no}: submission declares track {declared!r}, "
            f"expected {track.value!r}")
    team = header.get("team")
    if not isinstance(team, str) or not team:
        raise ValidationError(f"{source}:{first_no}: header needs a non-empty team")
    method = header.get("method", "")

    detection = track in (Track.BEV_DETECTION, Track.MULTIMODAL_DETECTION)
    boxes: dict = {}
    files: dict = {}
    for ln, line in stripped[1:]:
        where = f"{source}:{ln}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{where}: invalid JSON: {e}") from None
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: expected an object")
        if detection:
            box = _parse_box(rec, where, with_score=True)
            sid = box.sample_id
            boxes.setdefault(sid, []).append(box)
        else:
            sid = _required(rec, "sample_id", where)
            if not isinstance(sid, str) or not sid:
                raise ValidationError(f"{where}: sample_id must be a non-empty string")
            key = "grid" if track in (Track.MAP_SEGMENTATION, Track.OCCUPANCY) else "depth"
            rel = _required(rec, key, where)
            if not isinstance(rel, str):
                raise ValidationError(f"{where}: {key} must be a path string")
            if sid in files:
                raise ValidationError(f"{where}: duplicate prediction for sample {sid!r}")
            files[sid] = rel
        if known_ids is not None and sid not in known_ids:
            raise ValidationError(f"{where}: sample id {sid!r} is not in the manifest")

    return Submission(track=track, team=team, method=str(method),
                      boxes=boxes if detection else None,
                      files=files if not detection else None,
                      root=root or Path.cwd())


def parse_submission(path, track: Track, known_ids=None) -> Submission:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"cannot read submission {p}: {e}") from None
    except UnicodeDecodeError as e:
        raise ValidationError(f"{p}: not UTF-8 text: {e}") from None
    return parse_submission_text(text, track, known_ids=known_ids,
                                 root=p.parent.resolve(), source=str(p))


def write_submission(path, track: Track, team: str, records, method: str = "") -> None:
    """Serialize a submission; records are dicts already in wire form."""
    header = {"schema_version": SCHEMA_VERSION, "track": track.value, "team": team}
    if method:
        header["method"] = method
    lines = [json.dumps(header)]
    lines += [json.dumps(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
