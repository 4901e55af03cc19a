"""Uncompressed planar YUV 4:2:0 video I/O.

Handles the Y4M container (plain-text header + raw frames) and headerless
raw YUV420 streams, plus the frame <-> tensor bridges used by the
inference engine. Frames are kept in display order, which for these
containers is file order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor

import numpy as np

from .inference import Tensor

Y4M_SIGNATURE = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"

COLOR_PRIMARIES = ("bt601", "bt709")


class Y4MError(ValueError):
    """Malformed Y4M data. `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Frame:
    """One 8-bit YUV 4:2:0 picture.

    Chroma planes are half the luma size in both dimensions, which forces
    even width/height.
    """

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name, plane in (("y", self.y), ("u", self.u), ("v", self.v)):
            if plane.dtype != np.uint8 or plane.ndim != 2:
                raise ValueError(f"{name} plane must be a 2-D uint8 array")
        h, w = self.y.shape
        if h <= 0 or w <= 0:
            raise ValueError("frame dimensions must be positive")
        if h % 2 or w % 2:
            raise ValueError(f"frame dimensions must be even, got {w}x{h}")
        if self.u.shape != (h // 2, w // 2) or self.v.shape != (h // 2, w // 2):
            raise ValueError(
                f"chroma planes must be {w // 2}x{h // 2} for a {w}x{h} frame"
            )

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )

    @classmethod
    def constant(cls, width: int, height: int, y: int = 0, u: int = 128, v: int = 128) -> "Frame":
        return cls(
            y=np.full((height, width), y, dtype=np.uint8),
            u=np.full((height // 2, width // 2), u, dtype=np.uint8),
            v=np.full((height // 2, width // 2), v, dtype=np.uint8),
        )


@dataclass(frozen=True)
class VideoSequence:
    """Ordered frames sharing one geometry and frame rate.

    Width/height are stored explicitly so an empty sequence still carries
    enough information to be written back out.
    """

    frames: tuple[Frame, ...]
    frame_rate: Fraction
    width: int
    height: int
    color_primaries: str = "bt601"

    def __post_init__(self):
        if self.frame_rate.numerator <= 0 or self.frame_rate.denominator <= 0:
            raise ValueError(f"frame rate must be positive, got {self.frame_rate}")
        if self.color_primaries not in COLOR_PRIMARIES:
            raise ValueError(f"unknown color primaries {self.color_primaries!r}")
        if self.width <= 0 or self.height <= 0 or self.width % 2 or self.height % 2:
            raise ValueError(f"invalid geometry {self.width}x{self.height}")
        object.__setattr__(self, "frames", tuple(self.frames))
        for i, frame in enumerate(self.frames):
            if frame.width != self.width or frame.height != self.height:
                raise ValueError(
                    f"frame {i} is {frame.width}x{frame.height}, "
                    f"sequence is {self.width}x{self.height}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoSequence):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.frame_rate == other.frame_rate
            and self.color_primaries == other.color_primaries
            and len(self.frames) == len(other.frames)
            and all(a == b for a, b in zip(self.frames, other.frames))
        )

    @classmethod
    def from_frames(
        cls,
        frames,
        frame_rate: Fraction,
        color_primaries: str = "bt601",
    ) -> "VideoSequence":
        frames = tuple(frames)
        if not frames:
            raise ValueError("from_frames needs at least one frame; "
                             "construct empty sequences with explicit geometry")
        return cls(
            frames=frames,
            frame_rate=frame_rate,
            width=frames[0].width,
            height=frames[0].height,
            color_primaries=color_primaries,
        )


def parse_y4m(data: bytes) -> VideoSequence:
    """Parse a complete Y4M byte stream into a VideoSequence.

    Accepts 4:2:0 content only (colorspace token absent or C420*); the
    colorspace, geometry, and frame-rate tokens come from the header and
    every frame payload must be complete.
    """
    if not data.startswith(Y4M_SIGNATURE):
        raise Y4MError("missing YUV4MPEG2 signature", 0)
    header_end = data.find(b"\n")
    if header_end < 0:
        raise Y4MError("unterminated header line", len(data))

    header = data[:header_end]
    width = height = None
    frame_rate = None
    primaries = "bt601"
    offset = len(Y4M_SIGNATURE)
    for token in header[len(Y4M_SIGNATURE):].split(b" "):
        if not token:
            offset += 1
            continue
        try:
            text = token.decode("ascii")
        except UnicodeDecodeError:
            raise Y4MError("non-ASCII header token", offset) from None
        key, value = text[0], text[1:]
        if key == "W":
            width = _positive_int(value, "width", offset)
        elif key == "H":
            height = _positive_int(value, "height", offset)
        elif key == "F":
            num, _, den = value.partition(":")
            frame_rate = Fraction(
                _positive_int(num, "frame-rate numerator", offset),
                _positive_int(den or "1", "frame-rate denominator", offset),
            )
        elif key == "C":
            if not value.startswith("420"):
                raise Y4MError(f"unsupported colorspace C{value}; only 4:2:0 is handled", offset)
        elif key == "X" and value == "COLORPRIM=BT709":
            primaries = "bt709"
        # I (interlacing) and A (aspect) tokens carry nothing we use.
        offset += len(token) + 1

    if width is None or height is None:
        raise Y4MError("header is missing W or H token", header_end)
    if frame_rate is None:
        raise Y4MError("header is missing F token", header_end)
    if width % 2 or height % 2:
        raise Y4MError(f"odd dimensions {width}x{height} not representable in 4:2:0", 0)

    y_size = width * height
    c_size = (width // 2) * (height // 2)
    frame_bytes = y_size + 2 * c_size

    frames = []
    pos = header_end + 1
    while pos < len(data):
        marker_end = data.find(b"\n", pos)
        if marker_end < 0 or not data[pos:marker_end].startswith(FRAME_MARKER):
            raise Y4MError("expected FRAME marker", pos)
        payload_start = marker_end + 1
        payload = data[payload_start:payload_start + frame_bytes]
        if len(payload) < frame_bytes:
            raise Y4MError(
                f"truncated frame payload: expected {frame_bytes} bytes, got {len(payload)}",
                payload_start,
            )
        frames.append(_frame_from_payload(payload, width, height))
        pos = payload_start + frame_bytes

    return VideoSequence(
        frames=tuple(frames),
        frame_rate=frame_rate,
        width=width,
        height=height,
        color_primaries=primaries,
    )


def write_y4m(seq: VideoSequence) -> bytes:
    """Serialize a VideoSequence as Y4M; parse_y4m inverts this exactly."""
    header = (
        f"YUV4MPEG2 W{seq.width} H{seq.height} "
        f"F{seq.frame_rate.numerator}:{seq.frame_rate.denominator} C420mpeg2"
    )
    if seq.color_primaries == "bt709":
        header += " XCOLORPRIM=BT709"
    parts = [header.encode("ascii"), b"\n"]
    for frame in seq.frames:
        parts.append(FRAME_MARKER)
        parts.append(b"\n")
        parts.append(frame.y.tobytes())
        parts.append(frame.u.tobytes())
        parts.append(frame.v.tobytes())
    return b"".join(parts)


def parse_raw_yuv(
    data: bytes,
    width: int,
    height: int,
    frame_rate: Fraction,
    color_primaries: str = "bt601",
) -> VideoSequence:
    """Parse headerless planar YUV420; geometry and rate are caller-supplied."""
    if width <= 0 or height <= 0 or width % 2 or height % 2:
        raise ValueError(f"invalid geometry {width}x{height}")
    frame_bytes = width * height * 3 // 2
    if len(data) % frame_bytes:
        raise ValueError(
            f"stream length {len(data)} is not a multiple of the "
            f"{frame_bytes}-byte frame size for {width}x{height}"
        )
    frames = tuple(
        _frame_from_payload(data[i:i + frame_bytes], width, height)
        for i in range(0, len(data), frame_bytes)
    )
    return VideoSequence(
        frames=frames,
        frame_rate=frame_rate,
        width=width,
        height=height,
        color_primaries=color_primaries,
    )


def trim_to_duration(seq: VideoSequence, seconds: float) -> VideoSequence:
    """Keep the first floor(seconds * fps) frames; shorter inputs pass through."""
    if seconds <= 0:
        raise ValueError("duration must be positive")
    limit = floor(Fraction(seconds) * seq.frame_rate)
    if len(seq.frames) <= limit:
        return seq
    return VideoSequence(
        frames=seq.frames[:limit],
        frame_rate=seq.frame_rate,
        width=seq.width,
        height=seq.height,
        color_primaries=seq.color_primaries,
    )


def frame_to_tensor(frame: Frame, layout: str = "y_only") -> Tensor:
    """Convert a frame to a float32 tensor scaled to [0, 1].

    `y_only` gives a 1xHxW luma tensor; `yuv444_float` replicates each
    chroma sample into its 2x2 luma block and gives 3xHxW.
    """
    if layout == "y_only":
        planes = frame.y[np.newaxis, :, :]
    elif layout == "yuv444_float":
        u = frame.u.repeat(2, axis=0).repeat(2, axis=1)
        v = frame.v.repeat(2, axis=0).repeat(2, axis=1)
        planes = np.stack([frame.y, u, v])
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return Tensor(planes.astype(np.float32) / np.float32(255.0))


def tensor_to_frame(
    tensor: Tensor,
    chroma: tuple[np.ndarray, np.ndarray] | None = None,
) -> Frame:
    """Convert a float tensor in [0, 1] back to an 8-bit frame.

    Inverts frame_to_tensor: round to nearest, clamp to [0, 255]. A
    3-channel tensor subsamples chroma by taking the top-left sample of
    each 2x2 block (exact inverse of replication). A 1-channel tensor
    takes chroma from `chroma` (at half resolution) or defaults to the
    neutral value 128.
    """
    if tensor.data.dtype != np.float32:
        raise ValueError("tensor_to_frame expects a float32 tensor")
    channels, h, w = tensor.data.shape
    if channels == 1:
        y = _to_uint8(tensor.data[0])
        if chroma is not None:
            u, v = (np.asarray(p, dtype=np.uint8) for p in chroma)
        else:
            u = np.full((h // 2, w // 2), 128, dtype=np.uint8)
            v = np.full((h // 2, w // 2), 128, dtype=np.uint8)
    elif channels == 3:
        y = _to_uint8(tensor.data[0])
        u = _to_uint8(tensor.data[1][::2, ::2])
        v = _to_uint8(tensor.data[2][::2, ::2])
    else:
        raise ValueError(f"expected 1 or 3 channels, got {channels}")
    return Frame(y=y, u=u, v=v)


def _to_uint8(plane: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(plane.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def _frame_from_payload(payload: bytes, width: int, height: int) -> Frame:
    y_size = width * height
    c_size = (width // 2) * (height // 2)
    buf = np.frombuffer(payload, dtype=np.uint8)
    return Frame(
        y=buf[:y_size].reshape(height, width).copy(),
        u=buf[y_size:y_size + c_size].reshape(height // 2, width // 2).copy(),
        v=buf[y_size + c_size:y_size + 2 * c_size].reshape(height // 2, width // 2).copy(),
    )


def _positive_int(text: str, what: str, offset: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise Y4MError(f"malformed {what} {text!r}", offset) from None
    if value <= 0:
        raise Y4MError(f"{what} must be positive, got {value}", offset)
    return value
