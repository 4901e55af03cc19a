#!/usr/bin/env python3
"""End-to-end DNN test: build a model, benchmark it over a clip, read the CSV.

Mirrors what `movidnn build-model` + `movidnn dnn-test` do, but from Python,
on a synthetic pair of clips so it runs anywhere in a few seconds.
"""

from fractions import Fraction
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from movidnn import ArchConfig, build_architecture, save_model
from movidnn.pipeline import DnnTestConfig, read_metrics_csv, run_dnn_test
from movidnn.video_io import Frame, VideoSequence, write_y4m


def synthetic_clip(width, height, frames, seed):
    """Moving gradient plus noise: enough texture for meaningful SSIM."""
    rng = np.random.default_rng(seed)
    out = []
    yy, xx = np.mgrid[0:height, 0:width]
    for i in range(frames):
        y = ((yy * 2 + xx * 3 + 7 * i) % 200 + rng.integers(0, 40, (height, width))) % 256
        out.append(Frame(
            y=y.astype(np.uint8),
            u=np.full((height // 2, width // 2), 120, np.uint8),
            v=np.full((height // 2, width // 2), 136, np.uint8),
        ))
    return VideoSequence.from_frames(out, Fraction(30))


def main():
    with TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        print("1. Building a seeded ESPCN x2 fixture model ...")
        graph = build_architecture(ArchConfig(kind="espcn", scale=2, seed=7))
        model_path = tmp / "espcn_x2.mvdnn"
        model_path.write_bytes(save_model(graph))
        print(f"   {model_path.name}: {model_path.stat().st_size} bytes, "
              f"{len(graph.layers)} layers, upscale x{graph.upscale_factor}")

        print("2. Writing a 2-second 64x48 input clip and a 128x96 reference ...")
        low = synthetic_clip(64, 48, 60, seed=1)
        high = synthetic_clip(128, 96, 60, seed=2)
        video_path = tmp / "clip.y4m"
        ref_path = tmp / "clip_hr.y4m"
        video_path.write_bytes(write_y4m(low))
        ref_path.write_bytes(write_y4m(high))

        print("3. Running the DNN test (display order, 10 s limit, 3 warm-up frames) ...")
        result = run_dnn_test(DnnTestConfig(
            model_path=model_path,
            video_path=video_path,
            reference_path=ref_path,
            out_dir=tmp / "out",
            backend="parallel",
        ))
        report = result.report
        print(f"   processed {report.total_frames} frames at "
              f"{report.ms_per_frame:.2f} ms/frame ({report.fps:.1f} fps)")
        print(f"   psnr avg {report.psnr_avg:.2f} dB (min {report.psnr_min:.2f}, "
              f"max {report.psnr_max:.2f}), y-psnr {report.ypsnr_avg:.2f} dB")
        print(f"   ssim all {report.ssim_all:.4f}, y-ssim {report.yssim:.4f}")
        print(f"   enhanced clip: {result.output_video_path.name}")

        print("4. The CSV round-trips: aggregates reproduce from the frame rows.")
        summary, frames = read_metrics_csv(tmp / "out" / "clip__espcn_x2.csv")
        recomputed = np.mean([row["psnr"] for row in frames if row["psnr"] is not None])
        print(f"   summary psnr_avg={summary['psnr_avg']}, "
              f"recomputed from {len(frames)} rows={recomputed:.4f}")


if __name__ == "__main__":
    main()
