"""Pipeline orchestration: corrupt a dataset, score a submission, build
leaderboards, run the embedded self-test.

Everything here is also what the scoring service calls, so a submission
scored over HTTP produces a table identical to `robobench eval`.
"""

from __future__ import annotations

import concurrent.futures
import json
import shutil
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .camera import corrupt_image
from .core import CAMERA_CORRUPTIONS, LIDAR_FAILURES, CorruptionType, derive_seed, fnv1a64
from .dataio import (Manifest, ManifestSample, Submission, load_manifest,
                     read_depth, read_grid, read_gt_boxes, read_image,
                     read_pointcloud, save_manifest, write_image,
                     write_pointcloud)
from .depth import DepthConfig, evaluate_depth_set
from .detection import DetectionConfig, evaluate_detection
from .errors import MetricUndefinedError, RobobenchError, ValidationError
from .grid import ConfusionMatrix, accumulate, miou
from .lidar import AngularWindow, drop_beams, drop_points, infer_rings, restrict_angular
from .params import CANONICAL_PARAMS_SHA256, ParamsTable, load_params
from .tracks import Track

# canonical report column order: the 18 camera corruptions, LiDAR, clean
CANONICAL_ORDER = tuple(c.value for c in CAMERA_CORRUPTIONS) + tuple(
    c.value for c in LIDAR_FAILURES) + (CorruptionType.CLEAN.value,)


@dataclass(frozen=True)
class RunConfig:
    global_seed: int = 0
    jobs: int = 1
    params: ParamsTable = field(default_factory=load_params)

    def __post_init__(self):
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")


@dataclass(frozen=True)
class EvalOptions:
    median_scaling: bool = False
    micro_average: bool = False
    detection_classes: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ScoreTable:
    """Per-corruption scores plus the mean headline for one submission."""

    track: Track
    rows: tuple  # (corruption tag, value) in canonical order
    headline: float
    team: str
    method: str = ""
    created_at: str = ""
    toolkit_version: str = __version__
    params_sha256: str = CANONICAL_PARAMS_SHA256
    global_seed: int | None = None
    absent_rows: tuple = ()

    @classmethod
    def from_rows(cls, track: Track, rows, team: str, **meta) -> "ScoreTable":
        rows = tuple((str(tag), float(v)) for tag, v in rows)
        if not rows:
            raise MetricUndefinedError("a score table needs at least one row")
        headline = sum(v for _, v in rows) / len(rows)
        meta.setdefault("created_at", datetime.now(timezone.utc).isoformat())
        return cls(track=track, rows=rows, headline=headline, team=team, **meta)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "track": self.track.value,
            "team": self.team,
            "method": self.method,
            "created_at": self.created_at,
            "toolkit_version": self.toolkit_version,
            "params_sha256": self.params_sha256,
            "global_seed": self.global_seed,
            "rows": [{"corruption": tag, "value": v} for tag, v in self.rows],
            "absent_rows": list(self.absent_rows),
            "headline": self.headline,
        }

    @classmethod
    def from_json(cls, doc: dict, source: str = "score table") -> "ScoreTable":
        try:
            track = Track(doc["track"])
            rows = tuple((r["corruption"], float(r["value"])) for r in doc["rows"])
            table = cls(track=track, rows=rows, headline=float(doc["headline"]),
                        team=doc["team"], method=doc.get("method", ""),
                        created_at=doc.get("created_at", ""),
                        toolkit_version=doc.get("toolkit_version", ""),
                        params_sha256=doc.get("params_sha256", ""),
                        global_seed=doc.get("global_seed"),
                        absent_rows=tuple(doc.get("absent_rows", ())))
        except (KeyError, ValueError, TypeError) as e:
            raise ValidationError(f"{source}: malformed score table: {e}") from None
        mean = sum(v for _, v in table.rows) / len(table.rows)
        if abs(mean - table.headline) > 1e-9:
            raise ValidationError(
                f"{source}: headline {table.headline} does not equal the row mean {mean}")
        return table


# ---------------------------------------------------------------- corrupt

def _seed_for(cfg: RunConfig, sample: ManifestSample, part: str) -> int:
    # the addressed unit is one file, so the sample key carries the part name
    return derive_seed(cfg.global_seed, f"{sample.sample_id}:{part}",
                       sample.corruption, sample.severity)


def _corrupt_lidar_file(src: Path, dst: Path, sample: ManifestSample,
                        cfg: RunConfig) -> None:
    pc = read_pointcloud(src)
    level = cfg.params.level(sample.corruption, sample.severity)
    seed = _seed_for(cfg, sample, "lidar")
    if sample.corruption is CorruptionType.LIDAR_POINTS_DROP:
        out = drop_points(pc, level["drop_rate"], seed)
    elif sample.corruption is CorruptionType.LIDAR_ANGULAR_RESTRICT:
        out = restrict_angular(pc, AngularWindow(level["window_center"],
                                                 level["window_width"]))
    else:
        if not pc.has_ring:
            pc = infer_rings(pc, cfg.params.lidar_default_num_beams())
        available = len(np.unique(pc.rings)) if len(pc) else 0
        count = min(int(level["drop_count"]), available)
        out = drop_beams(pc, count=count, seed=seed)
    write_pointcloud(out, dst)


def _corrupt_sample(sample: ManifestSample, manifest: Manifest, out_dir: Path,
                    cfg: RunConfig) -> ManifestSample:
    identity = sample.severity == 0 or sample.corruption is CorruptionType.CLEAN
    if not identity and sample.corruption.is_camera and not sample.cameras:
        raise ValidationError(
            f"{sample.corruption.value} needs camera images but the sample has none")
    if not identity and sample.corruption.is_lidar and sample.lidar is None:
        raise ValidationError(
            f"{sample.corruption.value} needs a lidar file but the sample has none")
    new_cameras = {}
    for cam, rel in sorted(sample.cameras.items()):
        src = manifest.resolve(rel)
        dst_rel = f"images/{sample.sample_id}_{cam}.png"
        dst = out_dir / dst_rel
        if identity or not sample.corruption.is_camera:
            shutil.copyfile(src, dst)
        else:
            img = read_image(src)
            out = corrupt_image(img, sample.corruption, sample.severity,
                                _seed_for(cfg, sample, cam), cfg.params)
            write_image(out, dst)
        new_cameras[cam] = dst_rel

    new_lidar = None
    if sample.lidar is not None:
        src = manifest.resolve(sample.lidar)
        new_lidar = f"lidar/{sample.sample_id}.bin"
        dst = out_dir / new_lidar
        if identity or not sample.corruption.is_lidar:
            shutil.copyfile(src, dst)
        else:
            _corrupt_lidar_file(src, dst, sample, cfg)

    new_gt = None
    if sample.gt is not None:
        new_gt = f"gt/{sample.sample_id}{Path(sample.gt).suffix}"
        shutil.copyfile(manifest.resolve(sample.gt), out_dir / new_gt)

    return replace(sample, cameras=new_cameras, lidar=new_lidar, gt=new_gt)


def run_corrupt(manifest: Manifest, out_dir, cfg: RunConfig):
    """Corrupt every sample; returns (new manifest, failures).

    Deterministic end to end: per-sample seeds come from derive_seed, so
    re-running with the same global seed reproduces every output byte, and
    the worker count cannot change any output.
    """
    out = Path(out_dir)
    for sub in ("images", "lidar", "gt"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    def work(sample: ManifestSample):
        return _corrupt_sample(sample, manifest, out, cfg)

    results: dict[str, ManifestSample] = {}
    failures: list[tuple[str, str]] = []
    if cfg.jobs == 1:
        for s in manifest.samples:
            try:
                results[s.sample_id] = work(s)
            except RobobenchError as e:
                failures.append((s.sample_id, str(e)))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(work, s): s for s in manifest.samples}
            for fut in concurrent.futures.as_completed(futures):
                s = futures[fut]
                try:
                    results[s.sample_id] = fut.result()
                except RobobenchError as e:
                    failures.append((s.sample_id, str(e)))
    failures.sort(key=lambda f: f[0])

    # gather in manifest order so the output is independent of scheduling
    new_samples = tuple(results[s.sample_id] for s in manifest.samples
                        if s.sample_id in results)
    new_manifest = Manifest(track=manifest.track, samples=new_samples, root=out,
                            classes=manifest.classes,
                            empty_class_id=manifest.empty_class_id)
    save_manifest(new_manifest, out / "manifest.json")
    return new_manifest, failures


# ------------------------------------------------------------------- eval

def _group_samples(manifest: Manifest):
    groups: dict[str, list[ManifestSample]] = {}
    for s in manifest.samples:
        groups.setdefault(s.corruption.value, []).append(s)
    order = [tag for tag in CANONICAL_ORDER if tag in groups]
    return [(tag, groups[tag]) for tag in order]


def _load_jobs(items, jobs: int, fn):
    """Parallel file loading with a deterministic, input-ordered gather."""
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _eval_detection_group(samples, manifest, submission, config, jobs):
    gts = []
    for s in samples:
        if s.gt is None:
            raise ValidationError(f"sample {s.sample_id!r} has no ground-truth file")
        gts.extend(read_gt_boxes(manifest.resolve(s.gt)))
    preds = []
    for s in samples:
        preds.extend(submission.boxes.get(s.sample_id, ()))
    result = evaluate_detection(preds, gts, config,
                                sample_ids=[s.sample_id for s in samples])
    return result.nds


def _eval_grid_group(samples, manifest, submission, num_classes, included, jobs):
    def load(sample):
        if sample.gt is None:
            raise ValidationError(f"sample {sample.sample_id!r} has no ground-truth file")
        rel = submission.files.get(sample.sample_id)
        if rel is None:
            raise ValidationError(
                f"submission has no prediction for sample {sample.sample_id!r}")
        gt, ignore = read_grid(manifest.resolve(sample.gt))
        pred, _ = read_grid(submission.resolve(rel))
        return pred, gt, ignore

    cm = ConfusionMatrix(num_classes)
    for pred, gt, ignore in _load_jobs(samples, jobs, load):
        accumulate(cm, pred, gt, ignore_value=ignore)
    return miou(cm, included)


def _eval_depth_group(samples, manifest, submission, options, jobs):
    def load(sample):
        if sample.gt is None:
            raise ValidationError(f"sample {sample.sample_id!r} has no ground-truth file")
        rel = submission.files.get(sample.sample_id)
        if rel is None:
            raise ValidationError(
                f"submission has no prediction for sample {sample.sample_id!r}")
        return read_depth(submission.resolve(rel)), read_depth(manifest.resolve(sample.gt))

    pairs = _load_jobs(samples, jobs, load)
    cfg = DepthConfig(median_scaling=options.median_scaling,
                      micro_average=options.micro_average)
    metrics = evaluate_depth_set([p for p, _ in pairs], [g for _, g in pairs], cfg)
    return metrics.abs_rel


def _detection_config(manifest: Manifest, submission: Submission,
                      options: EvalOptions) -> DetectionConfig:
    if options.detection_classes:
        return DetectionConfig(class_names=tuple(options.detection_classes))
    if manifest.classes:
        return DetectionConfig(class_names=manifest.classes)
    names: set[str] = set()
    for s in manifest.samples:
        if s.gt is not None:
            names.update(b.class_name for b in read_gt_boxes(manifest.resolve(s.gt)))
    if not names:
        raise ValidationError("cannot infer a class set: no ground-truth boxes found")
    return DetectionConfig(class_names=tuple(sorted(names)))


def _grid_class_info(manifest: Manifest):
    if manifest.classes:
        num = len(manifest.classes)
    else:
        num = 0
        for s in manifest.samples:
            if s.gt is not None:
                gt, ignore = read_grid(manifest.resolve(s.gt))
                labels = gt[gt != ignore]
                if labels.size:
                    num = max(num, int(labels.max()) + 1)
        if num == 0:
            raise ValidationError("cannot infer the class count: no labeled GT cells")
    included = [i for i in range(num) if i != manifest.empty_class_id]
    return num, included


def run_eval(manifest: Manifest, submission: Submission, cfg: RunConfig,
             options: EvalOptions = EvalOptions()):
    """Score a submission per corruption group; headline = mean of rows.

    Returns (ScoreTable, warnings). Groups whose metric is undefined are
    reported absent and excluded from the mean with a warning.
    """
    if submission.track is not manifest.track:
        raise ValidationError(
            f"submission is for track {submission.track.value}, "
            f"manifest is {manifest.track.value}")
    track = manifest.track
    if track in (Track.BEV_DETECTION, Track.MULTIMODAL_DETECTION):
        det_config = _detection_config(manifest, submission, options)
    elif track in (Track.MAP_SEGMENTATION, Track.OCCUPANCY):
        num_classes, included = _grid_class_info(manifest)

    rows = []
    absent = []
    warnings: list[str] = []
    for tag, samples in _group_samples(manifest):
        try:
            if track in (Track.BEV_DETECTION, Track.MULTIMODAL_DETECTION):
                value = _eval_detection_group(samples, manifest, submission,
                                              det_config, cfg.jobs)
            elif track in (Track.MAP_SEGMENTATION, Track.OCCUPANCY):
                value = _eval_grid_group(samples, manifest, submission,
                                         num_classes, included, cfg.jobs)
            else:
                value = _eval_depth_group(samples, manifest, submission,
                                          options, cfg.jobs)
        except MetricUndefinedError as e:
            absent.append(tag)
            warnings.append(f"corruption {tag!r}: metric undefined ({e}); "
                            f"row excluded from the headline")
            continue
        rows.append((tag, value))

    if not rows:
        raise MetricUndefinedError("every corruption group is absent")
    table = ScoreTable.from_rows(track, rows, team=submission.team,
                                 method=submission.method,
                                 params_sha256=cfg.params.sha256,
                                 global_seed=cfg.global_seed,
                                 absent_rows=tuple(absent))
    return table, warnings


# ----------------------------------------------------------------- report

def build_report(tables) -> tuple[str, str, list]:
    """Rank score tables into a leaderboard; returns (csv, markdown, ranked).

    Ranking is by headline, descending for NDS/mIoU and ascending for
    Abs Rel; ties break on the earlier created_at timestamp. The best value
    per column is flagged (asterisk in CSV, bold in Markdown).
    """
    tables = list(tables)
    if not tables:
        raise ValidationError("report needs at least one score table")
    track = tables[0].track
    if any(t.track is not track for t in tables):
        raise ValidationError("cannot mix tracks in one leaderboard")

    reverse = track.higher_is_better
    ranked = sorted(tables, key=lambda t: ((-t.headline if reverse else t.headline),
                                           t.created_at))
    columns = [tag for tag in CANONICAL_ORDER
               if any(tag in dict(t.rows) for t in ranked)]

    def best(values):
        present = [v for v in values if v is not None]
        if not present:
            return None
        return max(present) if reverse else min(present)

    col_best = {tag: best([dict(t.rows).get(tag) for t in ranked]) for tag in columns}
    head_best = best([t.headline for t in ranked])

    header = ["rank", "team", "method", track.metric_name] + columns
    csv_lines = [",".join(header)]
    md_lines = ["| " + " | ".join(header) + " |",
                "|" + "|".join(["---"] * len(header)) + "|"]
    for rank, t in enumerate(ranked, 1):
        by_tag = dict(t.rows)

        def fmt(value, best_value, bold):
            if value is None:
                return "-"
            text = f"{value:.4f}"
            if best_value is not None and value == best_value:
                return f"**{text}**" if bold else f"{text}*"
            return text

        csv_cells = [str(rank), t.team, t.method, fmt(t.headline, head_best, False)]
        md_cells = [str(rank), t.team, t.method, fmt(t.headline, head_best, True)]
        for tag in columns:
            csv_cells.append(fmt(by_tag.get(tag), col_best[tag], False))
            md_cells.append(fmt(by_tag.get(tag), col_best[tag], True))
        csv_lines.append(",".join(csv_cells))
        md_lines.append("| " + " | ".join(md_cells) + " |")
    return "\n".join(csv_lines) + "\n", "\n".join(md_lines) + "\n", ranked


# --------------------------------------------------------------- selftest

def run_selftest(params_path=None) -> tuple[bool, list[str]]:
    """Embedded golden checks; returns (all_passed, report lines)."""
    import tempfile

    from importlib import resources

    lines: list[str] = []
    ok = True

    def check(name: str, fn):
        nonlocal ok
        try:
            fn()
            lines.append(f"PASS {name}")
        except Exception as e:  # a selftest reports, it never raises
            ok = False
            lines.append(f"FAIL {name}: {e}")

    def golden_vectors():
        ref = resources.files("robobench").joinpath("data/golden.json")
        if not ref.is_file():
            raise AssertionError("embedded golden vectors are missing")
        doc = json.loads(ref.read_text(encoding="utf-8"))
        for vec in doc["fnv1a64"]:
            got = fnv1a64(vec["input"].encode("utf-8"))
            assert got == int(vec["hash"], 16), f"fnv1a64({vec['input']!r}) = {got:#x}"
        for vec in doc["derived_seeds"]:
            got = derive_seed(vec["global_seed"], vec["sample_id"],
                              CorruptionType(vec["corruption"]), vec["severity"])
            assert got == int(vec["seed"], 16), f"derive_seed {vec} -> {got:#x}"

    def params_hash():
        table = load_params(params_path)
        if table.sha256 != CANONICAL_PARAMS_SHA256:
            raise AssertionError(
                f"params table {table.source} hash {table.sha256} does not match "
                f"the canonical table {CANONICAL_PARAMS_SHA256}")

    def nds_closed_form():
        from .detection import TpErrors, nds
        got = nds(0.4, TpErrors(0.5, 0.5, 0.5, 0.5, 0.5))
        assert abs(got - 0.45) < 1e-15, f"nds closed form gave {got}"

    def miou_closed_form():
        cm = ConfusionMatrix(2, counts=np.array([[5, 2], [3, 5]], dtype=np.int64))
        got = miou(cm)
        expect = (0.5 + 0.5) / 2
        assert abs(got - expect) < 1e-15, f"mIoU gave {got}"

    def depth_closed_form():
        gt = np.full((4, 4), 10.0)
        m = evaluate_depth_set([gt * 0.9], [gt])
        assert abs(m.abs_rel - 0.1) < 1e-12 and m.delta1 == 100.0

    def codec_round_trips():
        rng = np.random.Generator(np.random.Philox(key=0))
        with tempfile.TemporaryDirectory() as tmp:
            img = rng.integers(0, 256, (16, 24, 3), dtype=np.uint8)
            write_image(img, Path(tmp) / "img.png")
            assert np.array_equal(read_image(Path(tmp) / "img.png"), img)
            from .lidar import PointCloud
            pts = rng.standard_normal((100, 5)).astype(np.float32)
            pts[:, 4] = rng.integers(0, 32, 100)
            write_pointcloud(PointCloud(pts), Path(tmp) / "pc.bin")
            assert np.array_equal(read_pointcloud(Path(tmp) / "pc.bin").data, pts)

    check("golden-vectors", golden_vectors)
    check("params-table-hash", params_hash)
    check("nds-closed-form", nds_closed_form)
    check("miou-closed-form", miou_closed_form)
    check("depth-closed-form", depth_closed_form)
    check("codec-round-trips", codec_round_trips)
    return ok, lines


def load_score_table(path) -> ScoreTable:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"cannot read score table {p}: {e}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{p}: invalid JSON: {e}") from None
    return ScoreTable.from_json(doc, source=str(p))


def save_score_table(table: ScoreTable, path) -> None:
    Path(path).write_text(json.dumps(table.to_json(), indent=2) + "\n",
                          encoding="utf-8")
