"""Subjective MOS test sessions: randomized playlists, ratings, reports.

A session shows every selected (video, condition) pair exactly once, in
an order drawn by a seeded Fisher-Yates shuffle over an xorshift64*
generator, so any session can be reproduced from its logged seed. The
rater never learns the condition; blinding is the service's job (opaque
media tokens), this module just keeps condition data server-side.

Ratings are append-only and strictly in playlist order: the cursor is
authoritative and a submission for any other index is rejected.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

RATING_SCALE = (1, 2, 3, 4, 5)
RATING_LABELS = {1: "Bad", 2: "Poor", 3: "Fair", 4: "Good", 5: "Excellent"}

SESSION_CSV_HEADER = "session_id,participant,position,video_id,condition,rating,timestamp_ms"
MOS_CSV_HEADER = "video_id,condition,n,mos,stddev,ci95_lo,ci95_hi"

Z_95 = 1.96


class SessionError(Exception):
    pass


class InvalidRating(SessionError):
    """Rating outside the 1..5 scale."""


class OutOfOrderRating(SessionError):
    """Submission for an index other than the cursor (replay or skip)."""


class SessionComplete(SessionError):
    """The playlist has already been fully rated."""


class Xorshift64Star:
    """xorshift64* PRNG; the declared generator for playlist shuffles."""

    MULT = 0x2545F4914F6CDD1D
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK
        if self.state == 0:
            self.state = self.MASK  # xorshift state must be nonzero

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & self.MASK
        x ^= x >> 27
        self.state = x
        return (x * self.MULT) & self.MASK


def fisher_yates(items: list, seed: int) -> list:
    """Seeded Fisher-Yates: j = next_u64() % (i + 1), swapping down from the end."""
    rng = Xorshift64Star(seed)
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


@dataclass(frozen=True)
class PlaylistItem:
    video_id: str
    condition: str  # "original" or a model name
    media_path: Path


@dataclass
class SubjectiveSession:
    session_id: str
    participant: str
    playlist: tuple[PlaylistItem, ...]
    seed: int
    cursor: int = 0
    # index -> (rating, wall-clock ms); only ever written at the cursor
    ratings: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.cursor >= len(self.playlist)

    def current_item(self) -> PlaylistItem | None:
        return None if self.complete else self.playlist[self.cursor]


@dataclass(frozen=True)
class MosRow:
    video_id: str
    condition: str
    n: int
    mos: float
    stddev: float
    ci95_lo: float
    ci95_hi: float


def create_session(
    participant: str,
    videos: list[str],
    conditions: list[str],
    media_for: dict[tuple[str, str], Path],
    seed: int,
    session_id: str,
) -> SubjectiveSession:
    """Build a session whose playlist shuffles the full video x condition cross product."""
    if not videos or not conditions:
        raise SessionError("need at least one video and one condition")
    items = []
    for video in videos:
        for condition in conditions:
            key = (video, condition)
            if key not in media_for:
                raise SessionError(f"no media for video {video!r} under condition {condition!r}")
            items.append(PlaylistItem(video, condition, media_for[key]))
    return SubjectiveSession(
        session_id=session_id,
        participant=participant,
        playlist=tuple(fisher_yates(items, seed)),
        seed=seed,
    )


def submit_rating(session: SubjectiveSession, index: int, rating: int) -> bool:
    """Record a rating for the item at the cursor; returns True when the session is done.

    Rejects out-of-order indices (replay or skip), out-of-range ratings,
    and submissions to a completed session.
    """
    if session.complete:
        raise SessionComplete(f"session {session.session_id} is already complete")
    if rating not in RATING_SCALE:
        raise InvalidRating(f"rating must be one of {RATING_SCALE}, got {rating}")
    if index != session.cursor:
        raise OutOfOrderRating(
            f"expected a rating for item {session.cursor}, got item {index}"
        )
    session.ratings[index] = (rating, int(time.time() * 1000))
    session.cursor += 1
    return session.complete


def session_csv(session: SubjectiveSession) -> str:
    """Serialize a finished session's ratings (one row per playlist item)."""
    if not session.complete:
        raise SessionError("session is not complete yet")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SESSION_CSV_HEADER.split(","))
    for position, item in enumerate(session.playlist):
        rating, timestamp_ms = session.ratings[position]
        writer.writerow([
            session.session_id, session.participant, position,
            item.video_id, item.condition, rating, timestamp_ms,
        ])
    return out.getvalue()


def parse_session_csv(text: str) -> list[dict]:
    """Read rating rows back; the MOS report is recomputable from these alone."""
    lines = text.splitlines()
    if not lines or lines[0] != SESSION_CSV_HEADER:
        raise SessionError("not a session ratings CSV")
    keys = SESSION_CSV_HEADER.split(",")
    rows = []
    for row in csv.reader(lines[1:]):
        record = dict(zip(keys, row))
        record["position"] = int(record["position"])
        record["rating"] = int(record["rating"])
        record["timestamp_ms"] = int(record["timestamp_ms"])
        rows.append(record)
    return rows


def compute_mos(rows: list[dict]) -> list[MosRow]:
    """Per (video, condition): n, MOS, sample stddev, normal-approx 95% CI.

    The CI is mean +/- 1.96 * stddev / sqrt(n), clamped to the rating
    scale; a single rating has stddev 0 by convention.
    """
    if not rows:
        raise SessionError("no ratings to aggregate")
    groups: dict[tuple[str, str], list[int]] = {}
    for row in rows:
        groups.setdefault((row["video_id"], row["condition"]), []).append(row["rating"])

    report = []
    for (video_id, condition), ratings in sorted(groups.items()):
        n = len(ratings)
        mean = sum(ratings) / n
        if n > 1:
            stddev = math.sqrt(sum((r - mean) ** 2 for r in ratings) / (n - 1))
        else:
            stddev = 0.0
        half = Z_95 * stddev / math.sqrt(n)
        report.append(MosRow(
            video_id=video_id,
            condition=condition,
            n=n,
            mos=mean,
            stddev=stddev,
            ci95_lo=max(RATING_SCALE[0], mean - half),
            ci95_hi=min(RATING_SCALE[-1], mean + half),
        ))
    return report


def mos_report_csv(report: list[MosRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MOS_CSV_HEADER.split(","))
    for row in report:
        writer.writerow([
            row.video_id, row.condition, row.n,
            f"{row.mos:.4f}", f"{row.stddev:.4f}",
            f"{row.ci95_lo:.4f}", f"{row.ci95_hi:.4f}",
        ])
    return out.getvalue()
