#!/usr/bin/env python3
"""How PSNR and SSIM respond to controlled degradations of one frame."""

import numpy as np

from movidnn import psnr_frame, ssim_frame
from movidnn.video_io import Frame

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from dnn_test_walkthrough import synthetic_clip  # noqa: E402


def degrade(frame: Frame, sigma: float, seed: int = 0) -> Frame:
    rng = np.random.default_rng(seed)

    def noisy(plane):
        shifted = plane.astype(np.float64) + rng.normal(0, sigma, plane.shape)
        return np.clip(np.rint(shifted), 0, 255).astype(np.uint8)

    return Frame(y=noisy(frame.y), u=noisy(frame.u), v=noisy(frame.v))


def main():
    frame = synthetic_clip(96, 96, 1, seed=5).frames[0]

    print("additive gaussian noise on a textured 96x96 frame")
    print(f"{'sigma':>6} {'psnr all':>10} {'y-psnr':>10} {'ssim all':>10} {'y-ssim':>10}")
    for sigma in (0, 1, 2, 5, 10, 20):
        test = degrade(frame, sigma) if sigma else frame
        psnr = psnr_frame(frame, test)
        ypsnr = psnr_frame(frame, test, "y_only")
        ssim = ssim_frame(frame, test)
        yssim = ssim_frame(frame, test, mode="y_only")
        psnr_text = f"{psnr:.2f}" if psnr is not None else "identical"
        ypsnr_text = f"{ypsnr:.2f}" if ypsnr is not None else "identical"
        print(f"{sigma:>6} {psnr_text:>10} {ypsnr_text:>10} {ssim:>10.4f} {yssim:>10.4f}")

    print("\nidentical frames report a marker, not an invented dB cap;")
    print("the benchmark CSV leaves those cells empty and counts them instead.")


if __name__ == "__main__":
    main()
