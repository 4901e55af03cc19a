"""Reference builders for the bundled architectures and the int8 quantizer.

Three architectures are provided: a sub-pixel super-resolution network
(espcn), a residual-block super-resolution network (evsrnet), and a
residual denoiser (dncnn). Weights are seeded random fixtures drawn
uniformly from (-k, k) with k = 1/sqrt(fan_in); the platform evaluates
inference behaviour, not trained quality.

Quantization is post-training, symmetric, per-tensor int8 with zero
point 0: scale = max|value| / 127, from the weight values for weights
and from calibration statistics for activations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .inference import (
    Activation,
    Conv2d,
    ModelGraph,
    PixelShuffle,
    QMAX,
    ResidualAdd,
    Tensor,
    quantize_tensor,
    trace_activations,
)
from .video_io import VideoSequence, frame_to_tensor

ARCHITECTURES = ("espcn", "evsrnet", "dncnn")

DEFAULT_FEATURES = {"espcn": (64, 32), "evsrnet": 32, "dncnn": 64}


@dataclass(frozen=True)
class ArchConfig:
    """Configuration for build_architecture.

    `scale` applies to the super-resolution networks; dncnn preserves
    resolution and must keep scale 1. `features` falls back to the
    per-architecture default when None.
    """

    kind: str
    scale: int = 2
    blocks: int = 5  # evsrnet residual blocks
    features: int | tuple[int, int] | None = None
    depth: int = 17  # dncnn total conv layers
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.kind!r}")
        if self.kind == "dncnn":
            if self.scale != 1:
                raise ValueError("dncnn is resolution-preserving; scale must be 1")
            if self.depth < 3:
                raise ValueError("dncnn needs at least 3 conv layers")
        else:
            if self.scale < 2:
                raise ValueError(f"{self.kind} needs an upscale factor >= 2")
        if self.kind == "evsrnet" and self.blocks < 1:
            raise ValueError("evsrnet needs at least one residual block")


@dataclass(frozen=True)
class CalibrationStats:
    """Max |activation| seen per layer (plus the graph input) over samples."""

    input_max: float
    layer_max: tuple[float, ...]
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("calibration needs at least one sample")
        if self.input_max < 0 or any(v < 0 for v in self.layer_max):
            raise ValueError("activation maxima cannot be negative")

    def merge(self, other: "CalibrationStats") -> "CalibrationStats":
        """Elementwise max-combine; sample counts add."""
        if len(self.layer_max) != len(other.layer_max):
            raise ValueError("stats cover different graphs")
        return CalibrationStats(
            input_max=max(self.input_max, other.input_max),
            layer_max=tuple(max(a, b) for a, b in zip(self.layer_max, other.layer_max)),
            sample_count=self.sample_count + other.sample_count,
        )


def build_architecture(cfg: ArchConfig) -> ModelGraph:
    """Build a float32 graph with seeded fixture weights.

    Same cfg (seed included) always yields a bit-identical graph.
    """
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "espcn":
        f1, f2 = cfg.features or DEFAULT_FEATURES["espcn"]
        layers = [
            _conv(rng, 1, f1, 5), Activation("tanh"),
            _conv(rng, f1, f2, 3), Activation("relu"),
            _conv(rng, f2, cfg.scale ** 2, 3), PixelShuffle(cfg.scale),
        ]
        upscale = cfg.scale
    elif cfg.kind == "evsrnet":
        c = cfg.features or DEFAULT_FEATURES["evsrnet"]
        layers = [_conv(rng, 1, c, 3), Activation("relu")]
        for _ in range(cfg.blocks):
            block_input = len(layers) - 1  # layer whose output enters the block
            layers += [
                _conv(rng, c, c, 3), Activation("relu"),
                _conv(rng, c, c, 3), ResidualAdd(source=block_input),
            ]
        layers += [
            Activation("relu"),
            _conv(rng, c, cfg.scale ** 2, 3), PixelShuffle(cfg.scale),
        ]
        upscale = cfg.scale
    else:  # dncnn: predict the negated noise, add it back onto the input
        c = cfg.features or DEFAULT_FEATURES["dncnn"]
        layers = [_conv(rng, 1, c, 3), Activation("relu")]
        for _ in range(cfg.depth - 2):
            layers += [_conv(rng, c, c, 3), Activation("relu")]
        layers += [_conv(rng, c, 1, 3), ResidualAdd(source=-1)]
        upscale = 1

    name = cfg.kind if upscale == 1 else f"{cfg.kind}_x{cfg.scale}"
    return ModelGraph(
        name=name,
        layers=tuple(layers),
        input_channels=1,
        upscale_factor=upscale,
        arch=cfg.kind,
    )


def calibrate(graph: ModelGraph, video: VideoSequence, max_frames: int = 16) -> CalibrationStats:
    """Run up to max_frames frames through a float graph, recording per-layer max |activation|."""
    if graph.dtype != "float32":
        raise ValueError("calibration runs on the float graph, before quantization")
    if len(video) == 0:
        raise ValueError("calibration needs at least one frame")
    if max_frames < 1:
        raise ValueError("max_frames must be >= 1")

    layout = "y_only" if graph.input_channels == 1 else "yuv444_float"
    stats = None
    for frame in video.frames[:max_frames]:
        single = calibrate_tensor(graph, frame_to_tensor(frame, layout))
        stats = single if stats is None else stats.merge(single)
    return stats


def calibrate_tensor(graph: ModelGraph, x: Tensor) -> CalibrationStats:
    """Single-sample statistics; calibrate() is the max-combine over frames."""
    trace = trace_activations(graph, x)
    return CalibrationStats(
        input_max=float(np.max(np.abs(x.data), initial=0.0)),
        layer_max=tuple(float(np.max(np.abs(t.data), initial=0.0)) for t in trace),
        sample_count=1,
    )


def quantize_graph(graph: ModelGraph, stats: CalibrationStats) -> ModelGraph:
    """Convert a float graph to symmetric per-tensor int8.

    Weight scales come from the weights, activation scales from the
    calibration stats; a zero max is replaced by scale 1.0. Scales are
    preserved through relu and pixel shuffle, so those layers stay exact
    in the quantized domain.
    """
    if graph.dtype != "float32":
        raise ValueError("graph is already quantized")
    if len(stats.layer_max) != len(graph.layers):
        raise ValueError(
            f"stats cover {len(stats.layer_max)} layers, graph has {len(graph.layers)}"
        )

    layers = []
    for layer, act_max in zip(graph.layers, stats.layer_max):
        act_scale = _scale_for(act_max)
        if isinstance(layer, Conv2d):
            w_scale = _scale_for(float(np.max(np.abs(layer.weight), initial=0.0)))
            q = np.clip(
                np.sign(layer.weight) * np.floor(np.abs(layer.weight.astype(np.float64)) / w_scale + 0.5),
                -QMAX, QMAX,
            ).astype(np.int8)
            layers.append(Conv2d(weight=q, bias=layer.bias, weight_scale=w_scale,
                                 out_scale=act_scale))
        elif isinstance(layer, Activation):
            layers.append(Activation(layer.fn, out_scale=act_scale if layer.fn == "tanh" else None))
        elif isinstance(layer, ResidualAdd):
            layers.append(ResidualAdd(layer.source, out_scale=act_scale))
        else:
            layers.append(layer)

    return replace(
        graph,
        layers=tuple(layers),
        dtype="int8",
        input_scale=_scale_for(stats.input_max),
    )


def quantize_input(graph: ModelGraph, x: Tensor) -> Tensor:
    """Quantize a float input tensor to the graph's input scale."""
    if graph.dtype != "int8":
        raise ValueError("graph is not quantized")
    return quantize_tensor(x, graph.input_scale)


def _scale_for(max_abs: float) -> float:
    return max_abs / QMAX if max_abs > 0 else 1.0


def _conv(rng: np.random.Generator, in_ch: int, out_ch: int, k: int) -> Conv2d:
    bound = 1.0 / np.sqrt(in_ch * k * k)
    return Conv2d(
        weight=rng.uniform(-bound, bound, (out_ch, in_ch, k, k)).astype(np.float32),
        bias=rng.uniform(-bound, bound, out_ch).astype(np.float32),
    )
