#!/usr/bin/env python3
"""Post-training int8 quantization: size shrink vs output drift, per architecture.

Calibrates each bundled architecture on a short clip, quantizes to
symmetric per-tensor int8, and reports container sizes and the mean
absolute output difference against the float graph.
"""

import numpy as np

from movidnn import ArchConfig, build_architecture, calibrate, quantize_graph, save_model
from movidnn.inference import run_model
from movidnn.models import quantize_input
from movidnn.video_io import frame_to_tensor

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from dnn_test_walkthrough import synthetic_clip  # noqa: E402


def main():
    clip = synthetic_clip(48, 48, 10, seed=3)
    configs = [
        ArchConfig(kind="espcn", scale=2, seed=0),
        ArchConfig(kind="evsrnet", scale=2, seed=0),
        ArchConfig(kind="dncnn", scale=1, seed=0),
    ]
    print(f"{'arch':10} {'float B':>10} {'int8 B':>10} {'ratio':>7} {'mean |diff|':>12}")
    for cfg in configs:
        graph = build_architecture(cfg)
        stats = calibrate(graph, clip, max_frames=8)
        quantized = quantize_graph(graph, stats)
        float_bytes = len(save_model(graph))
        int8_bytes = len(save_model(quantized))

        diffs = []
        for frame in clip.frames:
            x = frame_to_tensor(frame, "y_only")
            out_float, _ = run_model(graph, x)
            out_int8, _ = run_model(quantized, quantize_input(quantized, x))
            diffs.append(np.mean(np.abs(out_int8.to_float().data - out_float.data)))
        print(f"{cfg.kind:10} {float_bytes:>10} {int8_bytes:>10} "
              f"{int8_bytes / float_bytes:>7.2%} {np.mean(diffs):>12.6f}")
    print(f"\n(differences are on the [0,1] luma scale; 1/255 = {1/255:.6f})")


if __name__ == "__main__":
    main()
