import json
import math
import struct

import numpy as np
import pytest

from movidnn.inference import (
    Activation,
    Conv2d,
    GraphValidationError,
    ModelFormatError,
    ModelGraph,
    PixelShuffle,
    QMAX,
    ResidualAdd,
    ShapeMismatchError,
    Tensor,
    conv2d,
    load_model,
    pixel_shuffle,
    quantize_tensor,
    run_model,
    save_model,
    space_to_depth,
)

MULT_SHIFT = 31


# --- independent oracles ----------------------------------------------------

def conv_oracle(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Direct-summation definition: quadruple loop, zero same padding."""
    out_ch, in_ch, kh, kw = weight.shape
    _, h, w = x.shape
    out = np.zeros((out_ch, h, w))
    for oc in range(out_ch):
        for oy in range(h):
            for ox in range(w):
                acc = 0.0
                for ic in range(in_ch):
                    for dy in range(kh):
                        for dx in range(kw):
                            iy = oy + dy - kh // 2
                            ix = ox + dx - kw // 2
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += float(x[ic, iy, ix]) * float(weight[oc, ic, dy, dx])
                out[oc, oy, ox] = acc + float(bias[oc])
    return out


def round_half_away_exact(numerator: int, denominator: int) -> int:
    """round(n/d) half away from zero in exact integer arithmetic, d > 0."""
    sign = 1 if numerator >= 0 else -1
    return sign * ((2 * abs(numerator) + denominator) // (2 * denominator))


def int8_conv_oracle(xq: np.ndarray, s_in: float, layer: Conv2d) -> np.ndarray:
    """Exact-arithmetic requantization: integer accumulate, rational rounding."""
    out_ch, in_ch, kh, kw = layer.weight.shape
    _, h, w = xq.shape
    # the declared multiplier: round(s_in * s_w / s_out * 2^31) half away from zero
    ratio = np.float64(s_in * layer.weight_scale / layer.out_scale) * 2.0 ** MULT_SHIFT
    mult = int(math.copysign(math.floor(abs(ratio) + 0.5), ratio))
    out = np.zeros((out_ch, h, w), dtype=np.int64)
    for oc in range(out_ch):
        b_q = int(math.copysign(
            math.floor(abs(float(layer.bias[oc]) / (s_in * layer.weight_scale)) + 0.5),
            layer.bias[oc],
        ))
        for oy in range(h):
            for ox in range(w):
                acc = b_q
                for ic in range(in_ch):
                    for dy in range(kh):
                        for dx in range(kw):
                            iy = oy + dy - kh // 2
                            ix = ox + dx - kw // 2
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += int(xq[ic, iy, ix]) * int(layer.weight[oc, ic, dy, dx])
                q = round_half_away_exact(acc * mult, 2 ** MULT_SHIFT)
                out[oc, oy, ox] = max(-QMAX, min(QMAX, q))
    return out.astype(np.int8)


def shuffle_oracle(x: np.ndarray, r: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.zeros((c // (r * r), h * r, w * r), dtype=x.dtype)
    for oc in range(c // (r * r)):
        for y in range(h):
            for xx in range(w):
                for dy in range(r):
                    for dx in range(r):
                        out[oc, y * r + dy, xx * r + dx] = x[oc * r * r + dy * r + dx, y, xx]
    return out


def random_conv_case(rng: np.random.Generator):
    in_ch = int(rng.integers(1, 9))
    out_ch = int(rng.integers(1, 9))
    k = int(rng.choice([1, 3, 5]))
    h = int(rng.integers(k, 17))
    w = int(rng.integers(k, 17))
    x = rng.uniform(-1, 1, (in_ch, h, w)).astype(np.float32)
    weight = rng.uniform(-1, 1, (out_ch, in_ch, k, k)).astype(np.float32)
    bias = rng.uniform(-1, 1, out_ch).astype(np.float32)
    return x, weight, bias


# --- conv2d -----------------------------------------------------------------

class TestConv2d:
    def test_all_ones_3x3(self):
        x = Tensor(np.ones((1, 3, 3), np.float32))
        layer = Conv2d(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
        expected = [[4, 6, 4], [6, 9, 6], [4, 6, 4]]
        assert np.allclose(conv2d(x, layer).data, expected)

    def test_identity_kernel(self, rng):
        x = Tensor(rng.uniform(-1, 1, (1, 5, 7)).astype(np.float32))
        layer = Conv2d(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        assert np.array_equal(conv2d(x, layer).data, x.data)

    def test_bias_only(self):
        x = Tensor(np.random.default_rng(0).uniform(-1, 1, (2, 4, 4)).astype(np.float32))
        layer = Conv2d(np.zeros((1, 2, 3, 3), np.float32), np.full(1, 0.5, np.float32))
        assert np.all(conv2d(x, layer).data == np.float32(0.5))

    def test_channel_mismatch(self):
        x = Tensor(np.zeros((2, 4, 4), np.float32))
        layer = Conv2d(np.zeros((1, 3, 3, 3), np.float32), np.zeros(1, np.float32))
        with pytest.raises(ShapeMismatchError):
            conv2d(x, layer)

    def test_matches_oracle_50_random_cases(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            x, weight, bias = random_conv_case(rng)
            got = conv2d(Tensor(x), Conv2d(weight, bias)).data
            want = conv_oracle(x, weight, bias)
            assert np.max(np.abs(got - want)) < 1e-5


class TestInt8Conv:
    def make_case(self, rng, in_ch=3, out_ch=2, k=3, h=6, w=5):
        xq = rng.integers(-QMAX, QMAX + 1, (in_ch, h, w)).astype(np.int8)
        wq = rng.integers(-QMAX, QMAX + 1, (out_ch, in_ch, k, k)).astype(np.int8)
        bias = rng.uniform(-0.5, 0.5, out_ch).astype(np.float32)
        s_in = float(rng.uniform(0.001, 0.05))
        layer = Conv2d(
            wq, bias,
            weight_scale=float(rng.uniform(0.001, 0.05)),
            out_scale=float(rng.uniform(0.001, 0.1)),
        )
        return Tensor(xq, scale=s_in), layer

    def test_exact_requantization_contract(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            x, layer = self.make_case(rng)
            got = conv2d(x, layer)
            want = int8_conv_oracle(x.data, x.scale, layer)
            assert got.scale == layer.out_scale
            assert np.array_equal(got.data, want), "int8 conv must match exact arithmetic"

    def test_parallel_pool_same_bits(self):
        from concurrent.futures import ThreadPoolExecutor

        rng = np.random.default_rng(8)
        x, layer = self.make_case(rng, in_ch=4, out_ch=8, h=10, w=9)
        with ThreadPoolExecutor() as pool:
            assert np.array_equal(conv2d(x, layer).data, conv2d(x, layer, pool=pool).data)


# --- pixel shuffle ----------------------------------------------------------

class TestPixelShuffle:
    def test_single_pixel_ordering(self):
        t = Tensor(np.array([1, 2, 3, 4], np.float32).reshape(4, 1, 1))
        assert np.array_equal(pixel_shuffle(t, 2).data, [[[1, 2], [3, 4]]])

    def test_shape_8_2_2(self, rng):
        t = Tensor(rng.uniform(0, 1, (8, 2, 2)).astype(np.float32))
        out = pixel_shuffle(t, 2)
        assert out.shape == (2, 4, 4)
        assert np.array_equal(out.data, shuffle_oracle(t.data, 2))

    def test_inverse_properties(self, rng):
        for r in (2, 3):
            t = Tensor(rng.uniform(0, 1, (r * r * 2, 3, 4)).astype(np.float32))
            assert space_to_depth(pixel_shuffle(t, r), r) == t
            s = Tensor(rng.uniform(0, 1, (2, 3 * r, 4 * r)).astype(np.float32))
            assert pixel_shuffle(space_to_depth(s, r), r) == s

    def test_indivisible_channels(self):
        with pytest.raises(ShapeMismatchError, match="divisible"):
            pixel_shuffle(Tensor(np.zeros((6, 2, 2), np.float32)), 2)


# --- run_model --------------------------------------------------------------

def identity_graph() -> ModelGraph:
    return ModelGraph(name="identity", layers=(), input_channels=1)


class TestRunModel:
    def test_empty_graph_identity(self, rng):
        x = Tensor(rng.uniform(0, 1, (1, 4, 4)).astype(np.float32))
        out, seconds = run_model(identity_graph(), x)
        assert out == x
        assert seconds >= 0

    def test_relu_clips_negative(self):
        w = np.ones((1, 1, 1, 1), np.float32)
        graph = ModelGraph(
            name="relu", input_channels=1, value_range=(-10.0, 10.0),
            layers=(Conv2d(w, np.zeros(1, np.float32)), Activation("relu")),
        )
        x = Tensor(np.array([[[-0.5, 0.25]]], np.float32).reshape(1, 1, 2))
        out, _ = run_model(graph, x)
        assert np.array_equal(out.data.ravel(), [0.0, 0.25])

    def test_dncnn_style_zero_final_conv(self, rng):
        # residual formulation: predicted noise 0 => output equals input
        c = 4
        layers = (
            Conv2d(rng.uniform(-0.1, 0.1, (c, 1, 3, 3)).astype(np.float32),
                   np.zeros(c, np.float32)),
            Activation("relu"),
            Conv2d(np.zeros((1, c, 3, 3), np.float32), np.zeros(1, np.float32)),
            ResidualAdd(source=-1),
        )
        graph = ModelGraph(name="denoise", layers=layers, input_channels=1)
        x = Tensor(rng.uniform(0, 1, (1, 8, 8)).astype(np.float32))
        out, _ = run_model(graph, x)
        assert np.array_equal(out.data, x.data)

    def test_output_clamped_to_range(self):
        graph = ModelGraph(
            name="amp", input_channels=1,
            layers=(Conv2d(np.full((1, 1, 1, 1), 5.0, np.float32), np.zeros(1, np.float32)),),
        )
        x = Tensor(np.array([0.5, -0.5], np.float32).reshape(1, 1, 2))
        out, _ = run_model(graph, x)
        assert np.array_equal(out.data.ravel(), [1.0, 0.0])

    def test_shape_error_reports_layer_index(self):
        layers = (
            Conv2d(np.zeros((2, 1, 1, 1), np.float32), np.zeros(2, np.float32)),
            PixelShuffle(2),
        )
        with pytest.raises(GraphValidationError, match="divisible"):
            ModelGraph(name="bad", layers=layers, input_channels=1, upscale_factor=2)

    def test_forward_time_positive_with_conv(self, rng):
        graph = ModelGraph(
            name="t", input_channels=1,
            layers=(Conv2d(rng.uniform(-1, 1, (8, 1, 3, 3)).astype(np.float32),
                           np.zeros(8, np.float32)),
                    Conv2d(rng.uniform(-1, 1, (1, 8, 3, 3)).astype(np.float32),
                           np.zeros(1, np.float32))),
        )
        x = Tensor(rng.uniform(0, 1, (1, 32, 32)).astype(np.float32))
        _, seconds = run_model(graph, x)
        assert seconds > 0

    def test_backends_bit_identical(self, rng):
        layers = (
            Conv2d(rng.uniform(-1, 1, (12, 1, 3, 3)).astype(np.float32),
                   rng.uniform(-1, 1, 12).astype(np.float32)),
            Activation("tanh"),
            Conv2d(rng.uniform(-1, 1, (4, 12, 3, 3)).astype(np.float32),
                   rng.uniform(-1, 1, 4).astype(np.float32)),
            PixelShuffle(2),
        )
        graph = ModelGraph(name="sr", layers=layers, input_channels=1, upscale_factor=2)
        x = Tensor(rng.uniform(0, 1, (1, 16, 16)).astype(np.float32))
        single, _ = run_model(graph, x, backend="single")
        parallel, _ = run_model(graph, x, backend="parallel")
        again, _ = run_model(graph, x, backend="single")
        assert np.array_equal(single.data, parallel.data)
        assert np.array_equal(single.data, again.data)

    def test_wrong_input_kind_rejected(self):
        x = Tensor(np.zeros((1, 2, 2), np.int8), scale=0.01)
        with pytest.raises(ShapeMismatchError, match="float32"):
            run_model(identity_graph(), x)


# --- graph validation -------------------------------------------------------

class TestValidation:
    def test_even_kernel_rejected(self):
        with pytest.raises(GraphValidationError, match="odd"):
            ModelGraph(
                name="g", input_channels=1,
                layers=(Conv2d(np.zeros((1, 1, 2, 2), np.float32), np.zeros(1, np.float32)),),
            )

    def test_channel_chain_checked(self):
        layers = (
            Conv2d(np.zeros((4, 1, 3, 3), np.float32), np.zeros(4, np.float32)),
            Conv2d(np.zeros((1, 8, 3, 3), np.float32), np.zeros(1, np.float32)),
        )
        with pytest.raises(GraphValidationError, match="channels"):
            ModelGraph(name="g", layers=layers, input_channels=1)

    def test_upscale_factor_must_match_shuffles(self):
        layers = (
            Conv2d(np.zeros((4, 1, 3, 3), np.float32), np.zeros(4, np.float32)),
            PixelShuffle(2),
        )
        with pytest.raises(GraphValidationError, match="upscale"):
            ModelGraph(name="g", layers=layers, input_channels=1, upscale_factor=4)

    def test_residual_source_must_match_channels(self):
        layers = (
            Conv2d(np.zeros((4, 1, 3, 3), np.float32), np.zeros(4, np.float32)),
            ResidualAdd(source=-1),  # input has 1 channel, current has 4
        )
        with pytest.raises(GraphValidationError, match="residual"):
            ModelGraph(name="g", layers=layers, input_channels=1)


# --- container --------------------------------------------------------------

def small_graph(rng) -> ModelGraph:
    return ModelGraph(
        name="tiny", arch="espcn", input_channels=1, upscale_factor=2,
        layers=(
            Conv2d(rng.uniform(-1, 1, (4, 1, 3, 3)).astype(np.float32),
                   rng.uniform(-1, 1, 4).astype(np.float32)),
            Activation("relu"),
            PixelShuffle(2),
        ),
    )


class TestContainer:
    def test_save_load_roundtrip(self, rng):
        data = save_model(small_graph(rng))
        assert data[:4] == b"MVDN"
        assert save_model(load_model(data)) == data

    def test_version_field_little_endian(self, rng):
        data = save_model(small_graph(rng))
        assert struct.unpack_from("<H", data, 4)[0] == 1

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(b"NOPE" + bytes(20))

    def test_unsupported_version(self, rng):
        data = bytearray(save_model(small_graph(rng)))
        struct.pack_into("<H", data, 4, 9)
        with pytest.raises(ModelFormatError, match="version"):
            load_model(bytes(data))

    def test_truncated_blob_names_tensor(self, rng):
        data = save_model(small_graph(rng))
        with pytest.raises(ModelFormatError, match=r"conv0\.(weight|bias)"):
            load_model(data[:-40])

    def test_manifest_length_mismatch(self, rng):
        data = save_model(small_graph(rng))
        (mlen,) = struct.unpack_from("<I", data, 6)
        manifest = json.loads(data[10:10 + mlen])
        # lie about the weight blob size
        manifest["layers"][0]["blobs"][0]["bytes"] += 4
        raw = json.dumps(manifest, separators=(",", ":")).encode()
        forged = data[:6] + struct.pack("<I", len(raw)) + raw + data[10 + mlen:]
        with pytest.raises(ModelFormatError, match="conv0.weight"):
            load_model(forged)

    def test_invariant_violation_reported_by_name(self, rng):
        # hand-build a manifest whose pixel shuffle follows a 6-channel conv
        graph = ModelGraph(
            name="ok", input_channels=1,
            layers=(Conv2d(rng.uniform(-1, 1, (6, 1, 3, 3)).astype(np.float32),
                           np.zeros(6, np.float32)),),
        )
        data = save_model(graph)
        (mlen,) = struct.unpack_from("<I", data, 6)
        manifest = json.loads(data[10:10 + mlen])
        manifest["layers"].append({"kind": "pixel_shuffle", "r": 2})
        manifest["upscale_factor"] = 2
        raw = json.dumps(manifest, separators=(",", ":")).encode()
        forged = data[:6] + struct.pack("<I", len(raw)) + raw + data[10 + mlen:]
        with pytest.raises(GraphValidationError, match=r"not divisible by r²"):
            load_model(forged)

    def test_quantized_roundtrip(self, rng):
        xq = quantize_tensor(Tensor(rng.uniform(-1, 1, (1, 4, 4)).astype(np.float32)), 0.01)
        graph = ModelGraph(
            name="q", input_channels=1, dtype="int8", input_scale=0.01,
            layers=(
                Conv2d(rng.integers(-QMAX, QMAX, (2, 1, 3, 3)).astype(np.int8),
                       np.zeros(2, np.float32), weight_scale=0.02, out_scale=0.05),
                Activation("relu"),
            ),
        )
        data = save_model(graph)
        again = load_model(data)
        assert save_model(again) == data
        out1, _ = run_model(graph, xq)
        out2, _ = run_model(again, xq)
        assert out1 == out2


class TestTensor:
    def test_int8_requires_scale(self):
        with pytest.raises(ValueError, match="scale"):
            Tensor(np.zeros((1, 2, 2), np.int8))
        with pytest.raises(ValueError, match="scale"):
            Tensor(np.zeros((1, 2, 2), np.float32), scale=0.5)

    def test_quantize_dequantize(self, rng):
        t = Tensor(rng.uniform(-1, 1, (2, 3, 3)).astype(np.float32))
        q = quantize_tensor(t, 1 / QMAX)
        back = q.to_float()
        assert np.max(np.abs(back.data - t.data)) <= 0.5 / QMAX + 1e-6
