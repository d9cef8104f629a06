"""HTTP API mirroring the challenge evaluation-server workflow."""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from ..errors import RobobenchError, ValidationError
from ..tracks import Track
from .store import (RateLimitError, ServiceConfig, SubmissionRecord,
                    SubmissionStore, UnknownSubmissionError)

API_PREFIX = "/api/v1"


class SubmitRequest(BaseModel):
    team: str = Field(min_length=1)
    payload: str = Field(min_length=1, description="Submission JSON-lines text")


class SubmitResponse(BaseModel):
    submission_id: str
    status: str


class ScoreRow(BaseModel):
    corruption: str
    value: float


class ScoreTableModel(BaseModel):
    track: str
    team: str
    method: str = ""
    created_at: str
    rows: list[ScoreRow]
    headline: float
    absent_rows: list[str] = []


class SubmissionStatusResponse(BaseModel):
    submission_id: str
    team: str
    track: str
    received_at: str
    status: str
    score_table: ScoreTableModel | None = None
    failure_reason: str | None = None


class LeaderboardEntry(BaseModel):
    rank: int
    team: str
    headline: float
    submission_id: str
    received_at: str


class LeaderboardResponse(BaseModel):
    track: str
    metric: str
    higher_is_better: bool
    entries: list[LeaderboardEntry]


class HealthResponse(BaseModel):
    status: str
    tracks: list[str]


def _status_model(rec: SubmissionRecord) -> SubmissionStatusResponse:
    table = None
    if rec.score_table is not None:
        doc = rec.score_table.to_json()
        table = ScoreTableModel(
            track=doc["track"], team=doc["team"], method=doc["method"],
            created_at=doc["created_at"],
            rows=[ScoreRow(**r) for r in doc["rows"]],
            headline=doc["headline"], absent_rows=doc["absent_rows"])
    return SubmissionStatusResponse(
        submission_id=rec.submission_id, team=rec.team, track=rec.track.value,
        received_at=rec.received_at, status=rec.status, score_table=table,
        failure_reason=rec.failure_reason)


def _parse_track_or_404(store: SubmissionStore, name: str) -> Track:
    try:
        track = Track(name)
    except ValueError:
        raise HTTPException(404, f"unknown track {name!r}") from None
    if track not in store.config.tracks:
        raise HTTPException(404, f"track {name!r} is not served")
    return track


def create_app(config: ServiceConfig) -> FastAPI:
    store = SubmissionStore(config)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        store.start_workers()
        try:
            yield
        finally:
            store.stop_workers()

    app = FastAPI(title="robobench scoring service", lifespan=lifespan)
    app.state.store = store

    @app.post(f"{API_PREFIX}/tracks/{{track}}/submissions",
              response_model=SubmitResponse, status_code=202)
    def submit(track: str, request: SubmitRequest):
        t = _parse_track_or_404(store, track)
        try:
            sid = store.submit(t, request.team, request.payload)
        except RateLimitError as e:
            raise HTTPException(429, str(e)) from None
        except ValidationError as e:
            raise HTTPException(400, str(e)) from None
        return SubmitResponse(submission_id=sid, status="queued")

    @app.get(f"{API_PREFIX}/submissions/{{submission_id}}",
             response_model=SubmissionStatusResponse)
    def get_status(submission_id: str):
        try:
            rec = store.get(submission_id)
        except UnknownSubmissionError as e:
            raise HTTPException(404, str(e)) from None
        return _status_model(rec)

    @app.get(f"{API_PREFIX}/tracks/{{track}}/leaderboard",
             response_model=LeaderboardResponse)
    def leaderboard(track: str):
        t = _parse_track_or_404(store, track)
        try:
            ranked = store.leaderboard(t)
        except RobobenchError as e:
            raise HTTPException(404, str(e)) from None
        entries = [LeaderboardEntry(rank=i, team=r.team,
                                    headline=r.score_table.headline,
                                    submission_id=r.submission_id,
                                    received_at=r.received_at)
                   for i, r in enumerate(ranked, 1)]
        return LeaderboardResponse(track=t.value, metric=t.metric_name,
                                   higher_is_better=t.higher_is_better,
                                   entries=entries)

    @app.get(f"{API_PREFIX}/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok",
                              tracks=[t.value for t in config.tracks])

    return app
