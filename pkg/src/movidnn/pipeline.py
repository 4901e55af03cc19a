"""End-to-end DNN test: video in, model per frame, video + metrics CSV out.

Frames are processed strictly in display order. Timing covers the model
forward pass only; the first few frames (default 3) are warm-up: still
processed and written, but excluded from the timing statistics.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .inference import Tensor, load_model, run_model
from .models import quantize_input
from .video_io import (
    Frame,
    VideoSequence,
    frame_to_tensor,
    parse_raw_yuv,
    parse_y4m,
    tensor_to_frame,
    trim_to_duration,
    write_y4m,
)

SUMMARY_HEADER = (
    "video,model,backend,total_frames,identical_frames,ms_per_frame,fps,"
    "psnr_min,psnr_max,psnr_avg,ypsnr_avg,ssim_all,yssim"
)
FRAME_HEADER = "frame,psnr,ypsnr,ssim_all,yssim,forward_ms"


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class DnnTestConfig:
    model_path: Path
    video_path: Path
    out_dir: Path
    reference_path: Path | None = None
    backend: str = "single"
    limit_seconds: float = 10.0
    warmup_frames: int = 3
    dump_frames: bool = False
    # geometry for headerless raw YUV inputs
    raw_width: int | None = None
    raw_height: int | None = None
    raw_fps: Fraction | None = None

    def __post_init__(self):
        if self.limit_seconds <= 0:
            raise ValueError("clip limit must be positive")
        if self.warmup_frames < 0:
            raise ValueError("warm-up frame count cannot be negative")
        if self.backend not in ("single", "parallel"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class DnnTestResult:
    video: str
    model_name: str
    backend: str
    output_video_path: Path
    report: metrics_mod.MetricsReport


def load_video(
    path: Path,
    raw_width: int | None = None,
    raw_height: int | None = None,
    raw_fps: Fraction | None = None,
) -> VideoSequence:
    """Read a .y4m file, or a headerless raw YUV420 file given its geometry."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".y4m" or data.startswith(b"YUV4MPEG2"):
        return parse_y4m(data)
    if raw_width is None or raw_height is None or raw_fps is None:
        raise PipelineError(
            f"{path} is not Y4M; raw YUV input needs --width, --height and --fps"
        )
    return parse_raw_yuv(data, raw_width, raw_height, raw_fps)


def run_dnn_test(cfg: DnnTestConfig) -> DnnTestResult:
    """Run the benchmark described by cfg and write video + CSV into out_dir."""
    graph = load_model(Path(cfg.model_path).read_bytes())
    video = load_video(cfg.video_path, cfg.raw_width, cfg.raw_height, cfg.raw_fps)
    video = trim_to_duration(video, cfg.limit_seconds)
    if len(video) == 0:
        raise PipelineError(f"{cfg.video_path} has no frames")

    factor = graph.upscale_factor
    if cfg.reference_path is not None:
        reference = load_video(cfg.reference_path, cfg.raw_width, cfg.raw_height, cfg.raw_fps)
    elif factor == 1:
        reference = video  # degraded-input tests supply their own reference
    else:
        raise PipelineError("an upscaling model needs --reference at the output resolution")
    if (reference.width, reference.height) != (video.width * factor, video.height * factor):
        raise PipelineError(
            f"reference is {reference.width}x{reference.height}, expected "
            f"{video.width * factor}x{video.height * factor}"
        )
    if len(reference) < len(video):
        raise PipelineError(
            f"reference has {len(reference)} frames, input has {len(video)}"
        )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames_dir = out_dir / "frames"
    if cfg.dump_frames:
        frames_dir.mkdir(exist_ok=True)

    layout = "y_only" if graph.input_channels == 1 else "yuv444_float"
    out_frames: list[Frame] = []
    psnr, ypsnr, ssim_all, yssim, timings = [], [], [], [], []
    for i, frame in enumerate(video.frames):
        tensor = frame_to_tensor(frame, layout)
        if graph.dtype == "int8":
            tensor = quantize_input(graph, tensor)
        out_tensor, seconds = run_model(graph, tensor, backend=cfg.backend)
        out_frame = _assemble_frame(out_tensor.to_float(), frame, factor)
        out_frames.append(out_frame)
        timings.append(seconds)
        if cfg.dump_frames:
            (frames_dir / f"frame_{i:05d}.yuv").write_bytes(
                out_frame.y.tobytes() + out_frame.u.tobytes() + out_frame.v.tobytes()
            )

        ref_frame = reference.frames[i]
        psnr.append(metrics_mod.psnr_frame(ref_frame, out_frame, "all_planes"))
        ypsnr.append(metrics_mod.psnr_frame(ref_frame, out_frame, "y_only"))
        ssim_all.append(metrics_mod.ssim_frame(ref_frame, out_frame, mode="all_planes"))
        yssim.append(metrics_mod.ssim_frame(ref_frame, out_frame, mode="y_only"))

    out_seq = VideoSequence(
        frames=tuple(out_frames),
        frame_rate=video.frame_rate,
        width=video.width * factor,
        height=video.height * factor,
        color_primaries=video.color_primaries,
    )
    stem = Path(cfg.video_path).stem
    out_path = out_dir / f"{stem}__{graph.name}.y4m"
    out_path.write_bytes(write_y4m(out_seq))

    report = metrics_mod.aggregate(
        psnr, ssim_all, yssim, ypsnr, timings,
        skip_timing_warmup=cfg.warmup_frames,
    )
    result = DnnTestResult(
        video=Path(cfg.video_path).name,
        model_name=graph.name,
        backend=cfg.backend,
        output_video_path=out_path,
        report=report,
    )
    write_metrics_csv(result, out_dir / f"{stem}__{graph.name}.csv")
    return result


def compare_videos(ref: VideoSequence, test: VideoSequence, label: str) -> DnnTestResult:
    """Metrics-only comparison of two same-geometry videos (no model, no timing)."""
    if (ref.width, ref.height) != (test.width, test.height):
        raise PipelineError(
            f"geometry differs: {ref.width}x{ref.height} vs {test.width}x{test.height}"
        )
    n = min(len(ref), len(test))
    if n == 0:
        raise PipelineError("nothing to compare: a video is empty")
    psnr, ypsnr, ssim_all, yssim = [], [], [], []
    for r, t in zip(ref.frames[:n], test.frames[:n]):
        psnr.append(metrics_mod.psnr_frame(r, t, "all_planes"))
        ypsnr.append(metrics_mod.psnr_frame(r, t, "y_only"))
        ssim_all.append(metrics_mod.ssim_frame(r, t, mode="all_planes"))
        yssim.append(metrics_mod.ssim_frame(r, t, mode="y_only"))
    report = metrics_mod.aggregate(psnr, ssim_all, yssim, ypsnr, [0.0] * n)
    return DnnTestResult(
        video=label, model_name="none", backend="none",
        output_video_path=Path(), report=report,
    )


def write_metrics_csv(result: DnnTestResult, path: Path) -> None:
    """Write the summary section and the per-frame section.

    Numeric cells use 4 decimal places; identical-frame PSNR (and any
    non-finite value) serializes as an empty cell, never as inf.
    """
    report = result.report
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER.split(","))
    writer.writerow([
        result.video, result.model_name, result.backend,
        report.total_frames, report.identical_frame_count,
        _cell(report.ms_per_frame), _cell(report.fps),
        _cell(report.psnr_min), _cell(report.psnr_max), _cell(report.psnr_avg),
        _cell(report.ypsnr_avg), _cell(report.ssim_all), _cell(report.yssim),
    ])
    writer.writerow(FRAME_HEADER.split(","))
    rows = zip(report.per_frame_psnr, report.per_frame_ypsnr,
               report.per_frame_ssim_all, report.per_frame_yssim, report.per_frame_ms)
    for i, (p, yp, sa, ys, ms) in enumerate(rows):
        writer.writerow([i, _cell(p), _cell(yp), _cell(sa), _cell(ys), _cell(ms)])
    Path(path).write_text(out.getvalue())


def read_metrics_csv(path: Path) -> tuple[dict, list[dict]]:
    """Parse a DNN-test CSV back into a summary dict and per-frame dicts.

    Empty cells come back as None; the parse-back is the independent
    check that the aggregates match the per-frame rows.
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != SUMMARY_HEADER:
        raise PipelineError(f"{path} does not start with the summary header")
    summary_keys = SUMMARY_HEADER.split(",")
    summary_row = next(csv.reader([lines[1]]))
    summary = dict(zip(summary_keys, (_parse_cell(v) for v in summary_row)))
    if len(lines) < 3 or lines[2] != FRAME_HEADER:
        raise PipelineError(f"{path} is missing the per-frame header")
    frame_keys = FRAME_HEADER.split(",")
    frames = [
        dict(zip(frame_keys, (_parse_cell(v) for v in row)))
        for row in csv.reader(lines[3:])
    ]
    return summary, frames


def _assemble_frame(out_tensor: Tensor, src: Frame, factor: int) -> Frame:
    """Build the output frame; luma-only models reuse the source chroma.

    For upscaling models the source chroma is enlarged by sample
    replication, mirroring the tensor-side chroma handling.
    """
    if out_tensor.shape[0] == 1:
        u, v = src.u, src.v
        if factor > 1:
            u = u.repeat(factor, axis=0).repeat(factor, axis=1)
            v = v.repeat(factor, axis=0).repeat(factor, axis=1)
        return tensor_to_frame(out_tensor, chroma=(u, v))
    return tensor_to_frame(out_tensor)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and not np.isfinite(value):
        return ""
    return f"{value:.4f}"


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text
