"""Objective quality metrics: PSNR and SSIM over 8-bit YUV 4:2:0 frames.

PSNR "all" pools squared error over the Y, U, and V samples before the
log; SSIM "all" weights the per-plane scores by sample count (4:1:1 for
4:2:0). Identical frames have MSE 0 and no finite PSNR, so psnr_frame
returns None (the identical-marker) rather than inventing a cap; the
aggregation surfaces the count instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .video_io import Frame

PEAK = 255.0


@dataclass(frozen=True)
class SsimParams:
    """Standard SSIM constants: 11x11 Gaussian window (sigma 1.5), K1/K2 over L=255."""

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = PEAK

    @property
    def c1(self) -> float:
        return (self.k1 * self.peak) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.peak) ** 2

    def window_1d(self) -> np.ndarray:
        """1-D Gaussian whose outer product is the (sum-1) 2-D window."""
        half = self.window_size // 2
        x = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(x ** 2) / (2.0 * self.sigma ** 2))
        return g / g.sum()

    def window_2d(self) -> np.ndarray:
        g = self.window_1d()
        return np.outer(g, g)


DEFAULT_SSIM = SsimParams()


@dataclass
class MetricsReport:
    """Per-frame and aggregate metric values for one benchmark run.

    None entries in the per-frame PSNR lists mark identical frames; they
    are excluded from min/max/avg and counted in identical_frame_count.
    Aggregates over an all-identical run are themselves None.
    """

    per_frame_psnr: list[float | None]
    per_frame_ypsnr: list[float | None]
    per_frame_ssim_all: list[float]
    per_frame_yssim: list[float]
    per_frame_ms: list[float]
    psnr_min: float | None
    psnr_max: float | None
    psnr_avg: float | None
    ypsnr_avg: float | None
    ssim_all: float
    yssim: float
    identical_frame_count: int
    ms_per_frame: float
    fps: float
    total_frames: int


def psnr_frame(ref: Frame, test: Frame, mode: str = "all_planes") -> float | None:
    """PSNR in dB between two frames, or None when they are identical.

    `all_planes` pools the MSE over Y+U+V samples; `y_only` uses luma.
    """
    _check_dims(ref, test)
    if mode == "all_planes":
        sq_sum = sum(
            float(np.sum((r.astype(np.float64) - t.astype(np.float64)) ** 2))
            for r, t in ((ref.y, test.y), (ref.u, test.u), (ref.v, test.v))
        )
        samples = ref.y.size + ref.u.size + ref.v.size
    elif mode == "y_only":
        sq_sum = float(np.sum((ref.y.astype(np.float64) - test.y.astype(np.float64)) ** 2))
        samples = ref.y.size
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mse = sq_sum / samples
    if mse == 0.0:
        return None
    return 10.0 * np.log10(PEAK ** 2 / mse)


def ssim_frame(
    ref: Frame,
    test: Frame,
    params: SsimParams = DEFAULT_SSIM,
    mode: str = "all_planes",
) -> float:
    """Mean SSIM over fully interior window positions (no edge padding).

    `all_planes` averages the Y, U, V plane scores weighted by sample
    count (4:1:1 for 4:2:0); `y_only` scores luma alone.
    """
    _check_dims(ref, test)
    if mode == "y_only":
        return _ssim_plane(ref.y, test.y, params)
    if mode != "all_planes":
        raise ValueError(f"unknown mode {mode!r}")
    y = _ssim_plane(ref.y, test.y, params)
    u = _ssim_plane(ref.u, test.u, params)
    v = _ssim_plane(ref.v, test.v, params)
    weights = np.array([ref.y.size, ref.u.size, ref.v.size], dtype=np.float64)
    return float(np.dot([y, u, v], weights) / weights.sum())


def aggregate(
    per_frame_psnr: list[float | None],
    per_frame_ssim_all: list[float],
    per_frame_yssim: list[float],
    per_frame_ypsnr: list[float | None],
    timings: list[float],
    skip_timing_warmup: int = 0,
) -> MetricsReport:
    """Combine per-frame metrics and per-frame forward times (seconds).

    `skip_timing_warmup` drops that many leading timings from the
    ms_per_frame/fps statistics (warm-up exclusion); the raw per-frame
    times are all kept in the report. If skipping would leave nothing,
    every timing counts.
    """
    n = len(per_frame_psnr)
    if n == 0:
        raise ValueError("cannot aggregate empty metric lists")
    lists = (per_frame_ssim_all, per_frame_yssim, per_frame_ypsnr, timings)
    if any(len(lst) != n for lst in lists):
        raise ValueError("per-frame metric lists must all have the same length")

    finite = [v for v in per_frame_psnr if v is not None]
    finite_y = [v for v in per_frame_ypsnr if v is not None]
    ms = [t * 1000.0 for t in timings]
    timed = ms[skip_timing_warmup:] or ms
    ms_per_frame = float(np.mean(timed))
    return MetricsReport(
        per_frame_psnr=list(per_frame_psnr),
        per_frame_ypsnr=list(per_frame_ypsnr),
        per_frame_ssim_all=list(per_frame_ssim_all),
        per_frame_yssim=list(per_frame_yssim),
        per_frame_ms=ms,
        psnr_min=min(finite) if finite else None,
        psnr_max=max(finite) if finite else None,
        psnr_avg=float(np.mean(finite)) if finite else None,
        ypsnr_avg=float(np.mean(finite_y)) if finite_y else None,
        ssim_all=float(np.mean(per_frame_ssim_all)),
        yssim=float(np.mean(per_frame_yssim)),
        identical_frame_count=n - len(finite),
        ms_per_frame=ms_per_frame,
        fps=1000.0 / ms_per_frame if ms_per_frame > 0 else float("inf"),
        total_frames=n,
    )


def _ssim_plane(ref: np.ndarray, test: np.ndarray, params: SsimParams) -> float:
    size = params.window_size
    if ref.shape[0] < size or ref.shape[1] < size:
        raise ValueError(
            f"plane {ref.shape[1]}x{ref.shape[0]} is smaller than the {size}x{size} window"
        )
    x = ref.astype(np.float64)
    y = test.astype(np.float64)
    win = params.window_1d()

    mu_x = _valid_filter(x, win, size)
    mu_y = _valid_filter(y, win, size)
    var_x = _valid_filter(x * x, win, size) - mu_x * mu_x
    var_y = _valid_filter(y * y, win, size) - mu_y * mu_y
    cov = _valid_filter(x * y, win, size) - mu_x * mu_y

    c1, c2 = params.c1, params.c2
    score = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(score))


def _valid_filter(plane: np.ndarray, win: np.ndarray, size: int) -> np.ndarray:
    """Separable Gaussian filter restricted to fully interior positions."""
    half = size // 2
    out = correlate1d(plane, win, axis=0, mode="constant")
    out = correlate1d(out, win, axis=1, mode="constant")
    return out[half:plane.shape[0] - half, half:plane.shape[1] - half]


def _check_dims(ref: Frame, test: Frame) -> None:
    if (ref.width, ref.height) != (test.width, test.height):
        raise ValueError(
            f"frame dimensions differ: {ref.width}x{ref.height} vs {test.width}x{test.height}"
        )
