"""Minimal deterministic neural-network executor.

Supports exactly the layer set the bundled architectures need: 2-D
convolution with zero "same" padding, elementwise relu/tanh, residual
addition, and sub-pixel (pixel-shuffle) upscaling, over float32 tensors
and symmetrically quantized int8 tensors (zero point fixed at 0).

Determinism contract: identical graph + input give bit-identical outputs
across runs and across the `single` and `parallel` backends. The float
path accumulates in float64 before casting back to float32; the int8
path is pure integer arithmetic. Requantization multiplies the int32
accumulator by a fixed-point multiplier round(s_in*s_w/s_out * 2^31)
and rounds half away from zero, so the result is exactly reproducible
in integer arithmetic.
"""

from __future__ import annotations

import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

MAGIC = b"MVDN"
CONTAINER_VERSION = 1

QMAX = 127  # symmetric int8 range [-127, 127]
MULT_SHIFT = 31  # fixed-point requantization denominator 2^31


class InferenceError(Exception):
    pass


class ModelFormatError(InferenceError):
    """Container bytes cannot be decoded (magic, version, lengths)."""


class GraphValidationError(InferenceError):
    """Graph violates a structural invariant; message names the violation."""


class ShapeMismatchError(InferenceError):
    """Tensor shape incompatible with a layer; carries the layer index."""

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


@dataclass(frozen=True)
class Tensor:
    """Dense (channels, height, width) array, float32 or quantized int8.

    Int8 tensors carry a positive per-tensor scale (zero point is always
    0): the represented real value is data * scale.
    """

    data: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"tensor must be 3-D (C,H,W), got shape {self.data.shape}")
        if self.data.dtype == np.float32:
            if self.scale is not None:
                raise ValueError("float32 tensors carry no quantization scale")
        elif self.data.dtype == np.int8:
            if self.scale is None or self.scale <= 0:
                raise ValueError("int8 tensors need a positive quantization scale")
        else:
            raise ValueError(f"unsupported dtype {self.data.dtype}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def kind(self) -> str:
        return "int8" if self.data.dtype == np.int8 else "float32"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.scale == other.scale and np.array_equal(self.data, other.data)

    def to_float(self) -> "Tensor":
        """Dequantize to float32 (identity on float tensors)."""
        if self.kind == "float32":
            return self
        return Tensor((self.data.astype(np.float64) * self.scale).astype(np.float32))


def quantize_tensor(tensor: Tensor, scale: float) -> Tensor:
    """Quantize a float32 tensor to int8 at the given per-tensor scale."""
    if tensor.kind != "float32":
        raise ValueError("tensor is already quantized")
    q = _round_half_away(tensor.data.astype(np.float64) / scale)
    return Tensor(np.clip(q, -QMAX, QMAX).astype(np.int8), scale=scale)


@dataclass(frozen=True)
class Conv2d:
    """Zero-padded "same" convolution; odd kernels keep padding symmetric.

    Quantized layers hold int8 weights with `weight_scale` and requantize
    their int32 accumulator (plus a bias term quantized at in*weight
    scale) to `out_scale`.
    """

    weight: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,) float32
    weight_scale: float | None = None
    out_scale: float | None = None

    kind = "conv2d"

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class Activation:
    """Elementwise relu or tanh.

    On int8 tensors relu is max(q, 0) and preserves the scale; tanh
    dequantizes, applies tanh, and requantizes to `out_scale`.
    """

    fn: str  # relu | tanh
    out_scale: float | None = None

    kind = "activation"


@dataclass(frozen=True)
class ResidualAdd:
    """Add the output of an earlier layer (`source`; -1 is the graph input)."""

    source: int
    out_scale: float | None = None

    kind = "residual_add"


@dataclass(frozen=True)
class PixelShuffle:
    """Rearrange C*r^2 channels into an r-times larger spatial grid."""

    r: int

    kind = "pixel_shuffle"


Layer = Conv2d | Activation | ResidualAdd | PixelShuffle


@dataclass(frozen=True)
class ModelGraph:
    name: str
    layers: tuple[Layer, ...]
    input_channels: int
    upscale_factor: int = 1
    value_range: tuple[float, float] = (0.0, 1.0)
    dtype: str = "float32"  # float32 | int8
    input_scale: float | None = None
    arch: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        validate_graph(self)


def validate_graph(graph: ModelGraph) -> None:
    """Check every structural invariant; raise GraphValidationError with the name."""
    if graph.dtype not in ("float32", "int8"):
        raise GraphValidationError(f"unknown graph dtype {graph.dtype!r}")
    quantized = graph.dtype == "int8"
    if quantized and (graph.input_scale is None or graph.input_scale <= 0):
        raise GraphValidationError("int8 graph needs a positive input_scale")
    if not quantized and graph.input_scale is not None:
        raise GraphValidationError("float32 graph must not carry an input_scale")
    if graph.input_channels <= 0:
        raise GraphValidationError("input channel count must be positive")
    if graph.upscale_factor < 1:
        raise GraphValidationError("upscale factor must be >= 1")
    lo, hi = graph.value_range
    if not lo < hi:
        raise GraphValidationError(f"empty value range [{lo}, {hi}]")

    channels = graph.input_channels
    scale_so_far = 1
    # (channels, cumulative upscale) after each prior step; index 0 = graph input
    seen: list[tuple[int, int]] = [(channels, 1)]
    for i, layer in enumerate(graph.layers):
        if isinstance(layer, Conv2d):
            out_ch, in_ch, kh, kw = layer.weight.shape
            if kh % 2 == 0 or kw % 2 == 0:
                raise GraphValidationError(
                    f"layer {i}: kernel {kh}x{kw} must be odd for symmetric same padding"
                )
            if in_ch != channels:
                raise GraphValidationError(
                    f"layer {i}: expects {in_ch} input channels, graph carries {channels}"
                )
            if layer.bias.shape != (out_ch,):
                raise GraphValidationError(f"layer {i}: bias shape {layer.bias.shape} != ({out_ch},)")
            expected = np.int8 if quantized else np.float32
            if layer.weight.dtype != expected:
                raise GraphValidationError(
                    f"layer {i}: weight dtype {layer.weight.dtype} in a {graph.dtype} graph"
                )
            if quantized and not (layer.weight_scale and layer.weight_scale > 0
                                  and layer.out_scale and layer.out_scale > 0):
                raise GraphValidationError(f"layer {i}: quantized conv needs weight/out scales")
            channels = out_ch
        elif isinstance(layer, Activation):
            if layer.fn not in ("relu", "tanh"):
                raise GraphValidationError(f"layer {i}: unknown activation {layer.fn!r}")
            if quantized and layer.fn == "tanh" and not (layer.out_scale and layer.out_scale > 0):
                raise GraphValidationError(f"layer {i}: quantized tanh needs an out scale")
        elif isinstance(layer, ResidualAdd):
            if not -1 <= layer.source < i:
                raise GraphValidationError(
                    f"layer {i}: residual source {layer.source} is not an earlier layer"
                )
            src_channels, src_scale = seen[layer.source + 1]
            if src_channels != channels or src_scale != scale_so_far:
                raise GraphValidationError(
                    f"layer {i}: residual source has {src_channels} channels at "
                    f"{src_scale}x, current is {channels} at {scale_so_far}x"
                )
            if quantized and not (layer.out_scale and layer.out_scale > 0):
                raise GraphValidationError(f"layer {i}: quantized residual needs an out scale")
        elif isinstance(layer, PixelShuffle):
            if layer.r < 2:
                raise GraphValidationError(f"layer {i}: pixel shuffle scale must be >= 2")
            if channels % (layer.r ** 2):
                raise GraphValidationError(
                    f"layer {i}: channels not divisible by r² ({channels} vs r={layer.r})"
                )
            channels //= layer.r ** 2
            scale_so_far *= layer.r
        else:
            raise GraphValidationError(f"layer {i}: unknown layer kind {layer!r}")
        seen.append((channels, scale_so_far))

    if scale_so_far != graph.upscale_factor:
        raise GraphValidationError(
            f"pixel shuffle scales multiply to {scale_so_far}, "
            f"declared upscale factor is {graph.upscale_factor}"
        )


def conv2d(x: Tensor, layer: Conv2d, pool: ThreadPoolExecutor | None = None) -> Tensor:
    """Apply a same-padded convolution.

    Float tensors accumulate in float64 and cast back to float32; int8
    tensors accumulate in int64 and requantize exactly. When `pool` is
    given, output channels are computed in parallel; results are
    bit-identical to the sequential path because each channel is an
    independent computation.
    """
    out_ch, in_ch, kh, kw = layer.weight.shape
    if x.shape[0] != in_ch:
        raise ShapeMismatchError(f"conv2d expects {in_ch} channels, got {x.shape[0]}")
    _, h, w = x.shape
    padded = np.pad(x.data, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    # im2col: one (h*w, in_ch*kh*kw) matrix shared by every output channel
    col = np.ascontiguousarray(
        windows.transpose(1, 2, 0, 3, 4), dtype=np.float64
    ).reshape(h * w, in_ch * kh * kw)
    wgt = layer.weight.reshape(out_ch, -1).astype(np.float64)

    if x.kind == "float32":
        bias = layer.bias.astype(np.float64)

        def channel(c: int) -> np.ndarray:
            return (col @ wgt[c] + bias[c]).astype(np.float32).reshape(h, w)

        return Tensor(np.stack(_map_channels(channel, out_ch, pool)))

    # int8 path: acc = sum(x_q * w_q) + round(bias / (s_in * s_w)), then
    # out = clamp(round_half_away(acc * m / 2^31)) with m fixed below.
    # The MAC runs in float64 (BLAS) -- exact, because |acc| is far below
    # 2^53 -- and converts back to int64 for the integer requantization.
    s_in = x.scale
    mult = _requant_multiplier(s_in * layer.weight_scale / layer.out_scale)
    bias_q = _round_half_away(layer.bias.astype(np.float64) / (s_in * layer.weight_scale))
    acc_bound = QMAX * QMAX * in_ch * kh * kw + int(np.max(np.abs(bias_q), initial=0))
    if acc_bound >= 2 ** 53:  # float64 MAC no longer exact
        raise InferenceError("kernel volume too large for exact int8 accumulation")
    if acc_bound * abs(mult) >= 2 ** 62:  # acc * m must fit int64
        raise InferenceError("requantization multiplier too large for int64 arithmetic")

    def channel_q(c: int) -> np.ndarray:
        acc = (col @ wgt[c]).astype(np.int64) + bias_q[c]
        return _requantize(acc * mult).reshape(h, w)

    out = _map_channels(channel_q, out_ch, pool)
    return Tensor(np.stack(out), scale=layer.out_scale)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """out[c, y*r+dy, x*r+dx] = in[c*r^2 + dy*r + dx, y, x]."""
    c, h, w = x.shape
    if r < 2:
        raise ValueError("pixel shuffle scale must be >= 2")
    if c % (r * r):
        raise ShapeMismatchError(f"channels not divisible by r² ({c} vs r={r})")
    out = (
        x.data.reshape(c // (r * r), r, r, h, w)
        .transpose(0, 3, 1, 4, 2)
        .reshape(c // (r * r), h * r, w * r)
    )
    return Tensor(np.ascontiguousarray(out), scale=x.scale)


def space_to_depth(x: Tensor, r: int) -> Tensor:
    """Exact inverse of pixel_shuffle with the same scale r."""
    c, h, w = x.shape
    if h % r or w % r:
        raise ShapeMismatchError(f"spatial dims {h}x{w} not divisible by r={r}")
    out = (
        x.data.reshape(c, h // r, r, w // r, r)
        .transpose(0, 2, 4, 1, 3)
        .reshape(c * r * r, h // r, w // r)
    )
    return Tensor(np.ascontiguousarray(out), scale=x.scale)


def run_model(graph: ModelGraph, x: Tensor, backend: str = "single") -> tuple[Tensor, float]:
    """Run all layers in order; return (output, forward seconds).

    The timer covers only layer execution. The output is clamped to the
    graph's declared value range (in the quantized domain for int8
    graphs). `backend` is `single` or `parallel`; both give bit-identical
    tensors.
    """
    _check_input(graph, x)
    if backend not in ("single", "parallel"):
        raise ValueError(f"unknown backend {backend!r}")
    pool = ThreadPoolExecutor() if backend == "parallel" else None
    try:
        start = time.perf_counter()
        out = _execute(graph, x, pool=pool)
        elapsed = time.perf_counter() - start
    finally:
        if pool is not None:
            pool.shutdown()
    return _clamp_to_range(out, graph.value_range), elapsed


def trace_activations(graph: ModelGraph, x: Tensor) -> list[Tensor]:
    """Per-layer outputs (before the final range clamp), for calibration."""
    _check_input(graph, x)
    trace: list[Tensor] = []
    _execute(graph, x, trace=trace)
    return trace


def _execute(
    graph: ModelGraph,
    x: Tensor,
    pool: ThreadPoolExecutor | None = None,
    trace: list[Tensor] | None = None,
) -> Tensor:
    # keep only the intermediates residual layers will ask for
    wanted = {layer.source for layer in graph.layers if isinstance(layer, ResidualAdd)}
    stash: dict[int, Tensor] = {-1: x} if -1 in wanted else {}
    current = x
    for i, layer in enumerate(graph.layers):
        try:
            if isinstance(layer, Conv2d):
                current = conv2d(current, layer, pool=pool)
            elif isinstance(layer, Activation):
                current = _activation(current, layer)
            elif isinstance(layer, ResidualAdd):
                current = _residual_add(current, stash[layer.source], layer)
            elif isinstance(layer, PixelShuffle):
                current = pixel_shuffle(current, layer.r)
        except ShapeMismatchError as exc:
            raise ShapeMismatchError(str(exc), layer_index=i) from None
        if i in wanted:
            stash[i] = current
        if trace is not None:
            trace.append(current)
    return current


def _activation(x: Tensor, layer: Activation) -> Tensor:
    if layer.fn == "relu":
        return Tensor(np.maximum(x.data, 0), scale=x.scale)
    if x.kind == "float32":
        return Tensor(np.tanh(x.data.astype(np.float64)).astype(np.float32))
    real = np.tanh(x.data.astype(np.float64) * x.scale)
    q = np.clip(_round_half_away(real / layer.out_scale), -QMAX, QMAX)
    return Tensor(q.astype(np.int8), scale=layer.out_scale)


def _residual_add(a: Tensor, b: Tensor, layer: ResidualAdd) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"residual shapes differ: {a.shape} vs {b.shape}")
    if a.kind == "float32":
        return Tensor(a.data + b.data)
    m_a = _requant_multiplier(a.scale / layer.out_scale)
    m_b = _requant_multiplier(b.scale / layer.out_scale)
    if (abs(m_a) + abs(m_b)) * QMAX >= 2 ** 62:
        raise InferenceError("requantization multiplier too large for int64 arithmetic")
    t = a.data.astype(np.int64) * m_a + b.data.astype(np.int64) * m_b
    return Tensor(_requantize(t), scale=layer.out_scale)


def _requant_multiplier(ratio: float) -> int:
    return int(_round_half_away(np.float64(ratio) * 2.0 ** MULT_SHIFT))


def _requantize(scaled: np.ndarray) -> np.ndarray:
    """Round scaled / 2^31 half away from zero, clamp to the int8 range."""
    rounded = np.sign(scaled) * ((np.abs(scaled) + (1 << (MULT_SHIFT - 1))) >> MULT_SHIFT)
    return np.clip(rounded, -QMAX, QMAX).astype(np.int8)


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return (np.sign(values) * np.floor(np.abs(values) + 0.5)).astype(np.int64)


def _map_channels(fn, out_ch: int, pool: ThreadPoolExecutor | None) -> list[np.ndarray]:
    if pool is None:
        return [fn(c) for c in range(out_ch)]
    return list(pool.map(fn, range(out_ch)))


def _check_input(graph: ModelGraph, x: Tensor) -> None:
    if x.shape[0] != graph.input_channels:
        raise ShapeMismatchError(
            f"graph expects {graph.input_channels} input channels, got {x.shape[0]}"
        )
    expected = "int8" if graph.dtype == "int8" else "float32"
    if x.kind != expected:
        raise ShapeMismatchError(f"graph expects a {expected} input tensor, got {x.kind}")


def _clamp_to_range(x: Tensor, value_range: tuple[float, float]) -> Tensor:
    lo, hi = value_range
    if x.kind == "float32":
        return Tensor(np.clip(x.data, np.float32(lo), np.float32(hi)))
    q_lo = max(-QMAX, int(np.ceil(lo / x.scale)))
    q_hi = min(QMAX, int(np.floor(hi / x.scale)))
    return Tensor(np.clip(x.data, q_lo, q_hi).astype(np.int8), scale=x.scale)


# --- model container (.mvdnn) ---------------------------------------------
#
# magic "MVDN" | version u16 LE | manifest length u32 LE | manifest JSON |
# weight blobs concatenated in manifest order, little-endian.


def save_model(graph: ModelGraph) -> bytes:
    """Serialize a graph; load_model inverts this bit-exactly."""
    manifest: dict = {
        "name": graph.name,
        "arch": graph.arch,
        "dtype": graph.dtype,
        "input": {
            "channels": graph.input_channels,
            "range": list(graph.value_range),
            "scale": graph.input_scale,
        },
        "upscale_factor": graph.upscale_factor,
        "layers": [],
    }
    blobs: list[bytes] = []
    for i, layer in enumerate(graph.layers):
        if isinstance(layer, Conv2d):
            weight = _blob(layer.weight)
            bias = _blob(layer.bias)
            entry = {
                "kind": "conv2d",
                "shape": list(layer.weight.shape),
                "blobs": [
                    {"tensor": f"conv{i}.weight", "dtype": str(layer.weight.dtype),
                     "bytes": len(weight)},
                    {"tensor": f"conv{i}.bias", "dtype": "float32", "bytes": len(bias)},
                ],
            }
            if graph.dtype == "int8":
                entry["weight_scale"] = layer.weight_scale
                entry["out_scale"] = layer.out_scale
            blobs += [weight, bias]
        elif isinstance(layer, Activation):
            entry = {"kind": "activation", "fn": layer.fn}
            if layer.out_scale is not None:
                entry["out_scale"] = layer.out_scale
        elif isinstance(layer, ResidualAdd):
            entry = {"kind": "residual_add", "source": layer.source}
            if layer.out_scale is not None:
                entry["out_scale"] = layer.out_scale
        else:
            entry = {"kind": "pixel_shuffle", "r": layer.r}
        manifest["layers"].append(entry)

    manifest_bytes = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<H", CONTAINER_VERSION), struct.pack("<I", len(manifest_bytes)),
         manifest_bytes, *blobs]
    )


def load_model(data: bytes) -> ModelGraph:
    """Decode a .mvdnn container and validate the graph before returning it."""
    if data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 10:
        raise ModelFormatError("container truncated before manifest length")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CONTAINER_VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    (manifest_len,) = struct.unpack_from("<I", data, 6)
    manifest_end = 10 + manifest_len
    if len(data) < manifest_end:
        raise ModelFormatError("container truncated inside manifest")
    try:
        manifest = json.loads(data[10:manifest_end])
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"manifest is not valid JSON: {exc}") from None

    dtype = manifest.get("dtype", "float32")
    weight_dtype = np.int8 if dtype == "int8" else np.float32
    pos = manifest_end
    layers: list[Layer] = []
    try:
        for i, entry in enumerate(manifest["layers"]):
            kind = entry.get("kind")
            if kind == "conv2d":
                shape = tuple(entry["shape"])
                weight_spec, bias_spec = entry["blobs"]
                weight, pos = _read_blob(data, pos, weight_spec, shape, weight_dtype)
                bias, pos = _read_blob(data, pos, bias_spec, (shape[0],), np.float32)
                layers.append(Conv2d(
                    weight=weight, bias=bias,
                    weight_scale=entry.get("weight_scale"),
                    out_scale=entry.get("out_scale"),
                ))
            elif kind == "activation":
                layers.append(Activation(fn=entry["fn"], out_scale=entry.get("out_scale")))
            elif kind == "residual_add":
                layers.append(ResidualAdd(source=entry["source"], out_scale=entry.get("out_scale")))
            elif kind == "pixel_shuffle":
                layers.append(PixelShuffle(r=entry["r"]))
            else:
                raise ModelFormatError(f"layer {i}: unknown kind {kind!r}")
        if pos != len(data):
            raise ModelFormatError(f"{len(data) - pos} trailing bytes after the last weight blob")
        return ModelGraph(
            name=manifest["name"],
            layers=tuple(layers),
            input_channels=manifest["input"]["channels"],
            upscale_factor=manifest["upscale_factor"],
            value_range=tuple(manifest["input"]["range"]),
            dtype=dtype,
            input_scale=manifest["input"].get("scale"),
            arch=manifest.get("arch", ""),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        # ModelFormatError/GraphValidationError pass through untouched
        raise ModelFormatError(f"malformed manifest: {exc}") from None


def _blob(array: np.ndarray) -> bytes:
    return array.astype(array.dtype.newbyteorder("<")).tobytes()


def _read_blob(data: bytes, pos: int, spec: dict, shape: tuple, dtype) -> tuple[np.ndarray, int]:
    name = spec["tensor"]
    declared = spec["bytes"]
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if declared != expected:
        raise ModelFormatError(
            f"{name}: manifest declares {declared} bytes, shape {shape} needs {expected}"
        )
    blob = data[pos:pos + declared]
    if len(blob) < declared:
        raise ModelFormatError(
            f"{name}: weight blob truncated ({len(blob)} of {declared} bytes)"
        )
    array = np.frombuffer(blob, dtype=np.dtype(dtype).newbyteorder("<")).reshape(shape)
    return array.astype(dtype), pos + declared
