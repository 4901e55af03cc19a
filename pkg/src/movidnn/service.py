"""HTTP service hosting subjective MOS tests.

Serves session state and media to the rating client. Conditions stay
server-side: the client only ever sees opaque media tokens, so the
presentation is blind. Media responses honor byte ranges, which browser
video elements rely on for playback.

Media layout on disk: every file in the originals directory is a video
(its stem is the video id); enhanced clips produced by the DNN test are
named `<video>__<model>.<ext>` in the enhanced directory, so the model
name doubles as the condition name.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import subjective as subj

ORIGINAL = "original"

MEDIA_TYPES = {
    ".mp4": "video/mp4",
    ".webm": "video/webm",
    ".mkv": "video/x-matroska",
    ".mov": "video/quicktime",
    ".y4m": "application/octet-stream",
    ".yuv": "application/octet-stream",
}


class MediaLibrary:
    """Video/condition inventory over the originals and enhanced directories."""

    def __init__(self, originals_dir: Path, enhanced_dir: Path):
        self.originals: dict[str, Path] = {}
        for path in sorted(Path(originals_dir).iterdir()) if Path(originals_dir).is_dir() else []:
            if path.is_file():
                self.originals.setdefault(path.stem, path)
        self.enhanced: dict[tuple[str, str], Path] = {}
        for path in sorted(Path(enhanced_dir).iterdir()) if Path(enhanced_dir).is_dir() else []:
            if path.is_file() and "__" in path.stem:
                video_id, condition = path.stem.rsplit("__", 1)
                self.enhanced.setdefault((video_id, condition), path)

    def video_ids(self) -> list[str]:
        return sorted(self.originals)

    def conditions_for(self, videos: list[str]) -> list[str]:
        """`original` plus every model condition available for all of `videos`."""
        common: set[str] | None = None
        for video in videos:
            models = {cond for (vid, cond) in self.enhanced if vid == video}
            common = models if common is None else common & models
        return [ORIGINAL] + sorted(common or ())

    def media_map(self, videos: list[str], conditions: list[str]) -> dict[tuple[str, str], Path]:
        mapping = {}
        for video in videos:
            for condition in conditions:
                if condition == ORIGINAL:
                    path = self.originals.get(video)
                else:
                    path = self.enhanced.get((video, condition))
                if path is not None:
                    mapping[(video, condition)] = path
        return mapping


class CreateSessionRequest(BaseModel):
    participant: str = "anonymous"
    video_ids: list[str] | None = None  # None means every available video
    conditions: list[str] | None = None  # None means original + common models
    seed: int | None = None


class RatingRequest(BaseModel):
    index: int
    rating: int  # 1..5 bound enforced by the session, reported as 400


def create_app(
    originals_dir: Path,
    enhanced_dir: Path,
    results_dir: Path,
    seed: int | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    """Build the API app; state is scoped to the returned instance."""
    library = MediaLibrary(Path(originals_dir), Path(enhanced_dir))
    results = Path(results_dir)
    results.mkdir(parents=True, exist_ok=True)

    sessions: dict[str, subj.SubjectiveSession] = {}
    session_locks: dict[str, threading.Lock] = {}
    media_tokens: dict[str, Path] = {}
    store_lock = threading.Lock()
    session_counter = 0

    app = FastAPI(title="movidnn subjective test service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.post("/api/sessions")
    def create_session(body: CreateSessionRequest) -> dict:
        nonlocal session_counter
        videos = body.video_ids if body.video_ids else library.video_ids()
        conditions = body.conditions if body.conditions else library.conditions_for(videos)
        with store_lock:
            if body.seed is not None:
                session_seed = body.seed
            elif seed is not None:
                session_seed = seed + session_counter
            else:
                session_seed = secrets.randbits(63)
            session_counter += 1
            try:
                session = subj.create_session(
                    participant=body.participant,
                    videos=videos,
                    conditions=conditions,
                    media_for=library.media_map(videos, conditions),
                    seed=session_seed,
                    session_id=uuid.uuid4().hex[:16],
                )
            except subj.SessionError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            sessions[session.session_id] = session
            session_locks[session.session_id] = threading.Lock()
        return {"session_id": session.session_id, "playlist_length": len(session.playlist)}

    @app.get("/api/sessions/{session_id}/next")
    def next_item(session_id: str) -> dict:
        session = _get_session(session_id)
        with session_locks[session_id]:
            if session.complete:
                return {"status": "done", "total": len(session.playlist)}
            item = session.current_item()
            token = _token_for(item.media_path)
            return {
                "status": "item",
                "index": session.cursor,
                "video_id": item.video_id,
                "media_token": token,
                "total": len(session.playlist),
            }

    @app.post("/api/sessions/{session_id}/ratings")
    def post_rating(session_id: str, body: RatingRequest) -> dict:
        session = _get_session(session_id)
        with session_locks[session_id]:
            try:
                done = subj.submit_rating(session, body.index, body.rating)
            except subj.InvalidRating as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
            except (subj.OutOfOrderRating, subj.SessionComplete) as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from None
            if done:
                _finalize(session)
        return {"ok": True, "done": done}

    @app.get("/api/media/{token}")
    def media(token: str, request: Request) -> Response:
        path = media_tokens.get(token)
        if path is None or not path.is_file():
            raise HTTPException(status_code=404, detail="unknown media token")
        data = path.read_bytes()
        media_type = MEDIA_TYPES.get(path.suffix.lower(), "application/octet-stream")
        range_header = request.headers.get("range")
        if range_header is None:
            return Response(data, media_type=media_type, headers={"Accept-Ranges": "bytes"})
        start, end = _parse_range(range_header, len(data))
        return Response(
            data[start:end + 1],
            status_code=206,
            media_type=media_type,
            headers={
                "Accept-Ranges": "bytes",
                "Content-Range": f"bytes {start}-{end}/{len(data)}",
            },
        )

    @app.get("/api/report")
    def report(format: str = "json"):
        raw = _all_rating_rows(results)
        rows = subj.compute_mos(raw) if raw else []
        if format == "csv":
            return Response(subj.mos_report_csv(rows), media_type="text/csv")
        return [vars(row) for row in rows]

    def _get_session(session_id: str) -> subj.SubjectiveSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def _token_for(path: Path) -> str:
        # tokens never expire, so re-fetching the current item (replaying
        # the video before rating) stays possible
        with store_lock:
            for token, target in media_tokens.items():
                if target == path:
                    return token
            token = secrets.token_hex(16)
            media_tokens[token] = path
            return token

    def _finalize(session: subj.SubjectiveSession) -> None:
        (results / f"session_{session.session_id}.csv").write_text(subj.session_csv(session))
        rows = _all_rating_rows(results)
        if rows:
            (results / "mos_report.csv").write_text(
                subj.mos_report_csv(subj.compute_mos(rows))
            )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _all_rating_rows(results_dir: Path) -> list[dict]:
    rows = []
    for path in sorted(results_dir.glob("session_*.csv")):
        rows.extend(subj.parse_session_csv(path.read_text()))
    return rows


def _parse_range(header: str, total: int) -> tuple[int, int]:
    """Parse a single-range `bytes=` header into inclusive [start, end]."""
    try:
        unit, _, spec = header.partition("=")
        if unit.strip().lower() != "bytes" or "," in spec:
            raise ValueError
        start_text, _, end_text = spec.strip().partition("-")
        if start_text == "":  # suffix form: last N bytes
            length = int(end_text)
            if length <= 0:
                raise ValueError
            return max(0, total - length), total - 1
        start = int(start_text)
        end = int(end_text) if end_text else total - 1
        if start > end or start >= total:
            raise ValueError
        return start, min(end, total - 1)
    except ValueError:
        raise HTTPException(
            status_code=416, detail=f"unsatisfiable range {header!r}"
        ) from None
