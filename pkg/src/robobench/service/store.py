"""Submission state: journaled records, scoring workers, leaderboards.

All mutations funnel through one lock around (journal append, index
update); request handlers read consistent snapshots under the same lock.
Scoring runs on one worker thread per track and is idempotent keyed by
submission id, so a crash between the "scoring" and "scored" events just
means the work is redone after replay.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..dataio import load_manifest, parse_submission_text
from ..errors import RobobenchError, ValidationError
from ..harness import EvalOptions, RunConfig, ScoreTable, run_eval
from ..params import load_params
from ..tracks import Track, parse_track
from .journal import JournalWriter, replay

TERMINAL = ("scored", "failed")


@dataclass(frozen=True)
class SubmissionRecord:
    submission_id: str
    team: str
    track: Track
    received_at: str
    status: str  # queued | scoring | scored | failed
    score_table: ScoreTable | None = None
    failure_reason: str | None = None


@dataclass(frozen=True)
class TrackConfig:
    manifest_path: Path
    payload_root: Path | None = None


@dataclass(frozen=True)
class ServiceConfig:
    storage_dir: Path
    tracks: dict
    host: str = "127.0.0.1"
    port: int = 8000
    daily_submission_limit: int = 5
    params_path: str | None = None

    @classmethod
    def load(cls, path) -> "ServiceConfig":
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot load service config {p}: {e}") from None
        if not isinstance(doc, dict) or "storage_dir" not in doc or "tracks" not in doc:
            raise ValidationError(f"{p}: config needs storage_dir and tracks")
        tracks = {}
        for name, spec in doc["tracks"].items():
            track = parse_track(name)
            if not isinstance(spec, dict) or "manifest" not in spec:
                raise ValidationError(f"{p}: track {name} needs a manifest path")
            manifest = Path(spec["manifest"])
            if not manifest.is_absolute():
                manifest = (p.parent / manifest).resolve()
            payload_root = spec.get("payload_root")
            tracks[track] = TrackConfig(
                manifest_path=manifest,
                payload_root=Path(payload_root) if payload_root else None)
        storage = Path(doc["storage_dir"])
        if not storage.is_absolute():
            storage = (p.parent / storage).resolve()
        return cls(storage_dir=storage, tracks=tracks,
                   host=doc.get("host", "127.0.0.1"),
                   port=int(doc.get("port", 8000)),
                   daily_submission_limit=int(doc.get("daily_submission_limit", 5)),
                   params_path=doc.get("params"))


class RateLimitError(RobobenchError):
    pass


class UnknownSubmissionError(RobobenchError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SubmissionStore:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.config.storage_dir.mkdir(parents=True, exist_ok=True)
        self.payload_dir = config.storage_dir / "payloads"
        self.payload_dir.mkdir(exist_ok=True)
        self._params = load_params(config.params_path)
        self._manifests = {
            track: load_manifest(tc.manifest_path)
            for track, tc in config.tracks.items()
        }
        self._lock = threading.Lock()
        self._records: dict[str, SubmissionRecord] = {}
        self._queues: dict[Track, queue.Queue] = {t: queue.Queue() for t in config.tracks}
        self._workers: list[threading.Thread] = []
        self._stop = threading.Event()

        journal_path = config.storage_dir / "journal.bin"
        if journal_path.exists():
            events, _ = replay(journal_path)
        else:
            events = []
        self._journal = JournalWriter(journal_path)
        for event in events:
            self._apply(event)
        # crashed mid-flight work is simply re-enqueued; rescoring is
        # idempotent and the completion guard keeps terminal states unique
        for rec in sorted(self._records.values(), key=lambda r: r.received_at):
            if rec.status not in TERMINAL and rec.track in self._queues:
                self._queues[rec.track].put(rec.submission_id)

    # ------------------------------------------------------------ events

    def _apply(self, event: dict) -> None:
        kind = event.get("type")
        sid = event.get("submission_id")
        if kind == "submitted":
            if sid in self._records:
                return
            try:
                track = Track(event["track"])
            except (KeyError, ValueError):
                return
            self._records[sid] = SubmissionRecord(
                submission_id=sid, team=event.get("team", ""), track=track,
                received_at=event.get("received_at", ""), status="queued")
        elif kind == "scoring":
            rec = self._records.get(sid)
            if rec and rec.status == "queued":
                self._records[sid] = replace(rec, status="scoring")
        elif kind == "scored":
            rec = self._records.get(sid)
            if rec and rec.status not in TERMINAL:
                table = ScoreTable.from_json(event["score_table"],
                                             source=f"journal:{sid}")
                self._records[sid] = replace(rec, status="scored", score_table=table)
        elif kind == "failed":
            rec = self._records.get(sid)
            if rec and rec.status not in TERMINAL:
                self._records[sid] = replace(rec, status="failed",
                                             failure_reason=event.get("reason", ""))

    def _commit(self, event: dict) -> None:
        """Persist then apply; callers hold the lock."""
        self._journal.append(event)
        self._apply(event)

    # -------------------------------------------------------------- api

    def manifest_for(self, track: Track):
        manifest = self._manifests.get(track)
        if manifest is None:
            raise ValidationError(f"track {track.value} is not served")
        return manifest

    def submit(self, track: Track, team: str, payload: str) -> str:
        manifest = self.manifest_for(track)
        root = self.config.tracks[track].payload_root or manifest.root
        # validate before persisting anything: schema errors are the client's
        submission = parse_submission_text(payload, track,
                                           known_ids=set(manifest.sample_ids()),
                                           root=root)
        if submission.team != team:
            raise ValidationError(
                f"request team {team!r} does not match payload team "
                f"{submission.team!r}")
        now = datetime.now(timezone.utc)
        with self._lock:
            cutoff = (now - timedelta(days=1)).isoformat()
            recent = sum(1 for r in self._records.values()
                         if r.team == team and r.received_at >= cutoff)
            if recent >= self.config.daily_submission_limit:
                raise RateLimitError(
                    f"team {team!r} reached the daily limit of "
                    f"{self.config.daily_submission_limit} submissions")
            sid = str(uuid.uuid4())
            payload_file = self.payload_dir / f"{sid}.jsonl"
            payload_file.write_text(payload, encoding="utf-8")
            self._commit({"type": "submitted", "submission_id": sid,
                          "track": track.value, "team": team,
                          "received_at": now.isoformat(),
                          "payload_file": payload_file.name})
        self._queues[track].put(sid)
        return sid

    def get(self, submission_id: str) -> SubmissionRecord:
        with self._lock:
            rec = self._records.get(submission_id)
        if rec is None:
            raise UnknownSubmissionError(f"unknown submission {submission_id!r}")
        return rec

    def leaderboard(self, track: Track) -> list[SubmissionRecord]:
        """Best scored submission per team, ranked; ties to earlier arrival."""
        self.manifest_for(track)
        with self._lock:
            scored = [r for r in self._records.values()
                      if r.track is track and r.status == "scored"]
        best: dict[str, SubmissionRecord] = {}
        reverse = track.higher_is_better
        for rec in scored:
            cur = best.get(rec.team)
            if cur is None:
                best[rec.team] = rec
                continue
            better = (rec.score_table.headline > cur.score_table.headline
                      if reverse else
                      rec.score_table.headline < cur.score_table.headline)
            tie = rec.score_table.headline == cur.score_table.headline
            if better or (tie and rec.received_at < cur.received_at):
                best[rec.team] = rec
        return sorted(best.values(),
                      key=lambda r: ((-r.score_table.headline if reverse
                                      else r.score_table.headline),
                                     r.received_at))

    # ---------------------------------------------------------- scoring

    def _score_one(self, sid: str) -> None:
        with self._lock:
            rec = self._records.get(sid)
            if rec is None or rec.status in TERMINAL:
                return
            if rec.status == "queued":
                self._commit({"type": "scoring", "submission_id": sid, "at": _now()})
            track = rec.track
            team = rec.team
        try:
            payload = (self.payload_dir / f"{sid}.jsonl").read_text(encoding="utf-8")
            manifest = self._manifests[track]
            root = self.config.tracks[track].payload_root or manifest.root
            submission = parse_submission_text(
                payload, track, known_ids=set(manifest.sample_ids()), root=root)
            table, _ = run_eval(manifest, submission,
                                RunConfig(params=self._params))
            table = replace(table, team=team)
            event = {"type": "scored", "submission_id": sid,
                     "score_table": table.to_json(), "at": _now()}
        except RobobenchError as e:
            event = {"type": "failed", "submission_id": sid, "reason": str(e),
                     "at": _now()}
        except OSError as e:
            event = {"type": "failed", "submission_id": sid,
                     "reason": f"payload unreadable: {e}", "at": _now()}
        with self._lock:
            rec = self._records.get(sid)
            if rec is not None and rec.status not in TERMINAL:
                self._commit(event)

    def _worker_loop(self, track: Track) -> None:
        q = self._queues[track]
        while not self._stop.is_set():
            try:
                sid = q.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                self._score_one(sid)
            finally:
                q.task_done()

    def start_workers(self) -> None:
        for track in self._queues:
            t = threading.Thread(target=self._worker_loop, args=(track,),
                                 name=f"scorer-{track.value}", daemon=True)
            t.start()
            self._workers.append(t)

    def stop_workers(self) -> None:
        self._stop.set()
        for t in self._workers:
            t.join(timeout=5.0)
        self._workers.clear()
        self._journal.close()
