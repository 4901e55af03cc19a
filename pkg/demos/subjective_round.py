#!/usr/bin/env python3
"""Simulate a small subjective study and compute the MOS report.

Three simulated raters each complete a full randomized session over two
clips under three conditions. Real studies run the same protocol over
HTTP (`movidnn serve`) with the browser client; the session logic and the
statistics are exactly what this script calls.
"""

from pathlib import Path

import numpy as np

from movidnn.subjective import (
    compute_mos,
    create_session,
    mos_report_csv,
    parse_session_csv,
    session_csv,
    submit_rating,
)

# how good each condition "really" is, per rater bias
TRUE_QUALITY = {"original": 4.6, "espcn_x2": 3.4, "dncnn": 3.9}


def simulate_rater(name: str, seed: int, rng: np.random.Generator) -> str:
    videos = ["sunset", "street"]
    conditions = list(TRUE_QUALITY)
    media = {(v, c): Path(f"/media/{v}__{c}.y4m") for v in videos for c in conditions}
    session = create_session(
        participant=name, videos=videos, conditions=conditions,
        media_for=media, seed=seed, session_id=f"sim_{name}",
    )
    order = [(item.video_id, item.condition) for item in session.playlist]
    print(f"  {name}: playlist {order}")
    for index, item in enumerate(session.playlist):
        score = TRUE_QUALITY[item.condition] + rng.normal(0, 0.7)
        rating = int(np.clip(round(score), 1, 5))
        submit_rating(session, index, rating)
    return session_csv(session)


def main():
    rng = np.random.default_rng(11)
    print("collecting sessions (each rater sees every pair once, shuffled):")
    rows = []
    for i, rater in enumerate(("ana", "ben", "chloe")):
        rows.extend(parse_session_csv(simulate_rater(rater, seed=100 + i, rng=rng)))

    print(f"\n{len(rows)} ratings collected; MOS report:")
    report = compute_mos(rows)
    print(mos_report_csv(report))
    best = max(report, key=lambda r: r.mos)
    print(f"highest MOS: {best.video_id} / {best.condition} at {best.mos:.2f} "
          f"(95% CI {best.ci95_lo:.2f}..{best.ci95_hi:.2f}, n={best.n})")


if __name__ == "__main__":
    main()
