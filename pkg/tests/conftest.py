"""Shared helpers: synthetic frames and clips for the test suite."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from movidnn.video_io import Frame, VideoSequence


def random_frame(rng: np.random.Generator, width: int = 32, height: int = 32) -> Frame:
    return Frame(
        y=rng.integers(0, 256, (height, width), dtype=np.uint8),
        u=rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8),
        v=rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8),
    )


def random_video(
    seed: int,
    frames: int,
    width: int = 32,
    height: int = 32,
    fps: Fraction = Fraction(30),
) -> VideoSequence:
    rng = np.random.default_rng(seed)
    return VideoSequence(
        frames=tuple(random_frame(rng, width, height) for _ in range(frames)),
        frame_rate=fps,
        width=width,
        height=height,
    )


def gradient_frame(width: int, height: int, shift: int = 0) -> Frame:
    """Deterministic non-constant frame; shift varies content per frame."""
    yy, xx = np.mgrid[0:height, 0:width]
    y = ((yy * 3 + xx * 5 + shift) % 256).astype(np.uint8)
    cyy, cxx = np.mgrid[0:height // 2, 0:width // 2]
    u = ((cyy + 2 * cxx + shift) % 256).astype(np.uint8)
    v = ((2 * cyy + cxx + 3 * shift) % 256).astype(np.uint8)
    return Frame(y=y, u=u, v=v)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
