"""Frame sources (YUV4MPEG2 streams, Netpbm image sequences) and color conversions.

Frames are stored as planar 8-bit YUV. Derived views (gray, rgb, hsv) are computed
lazily and memoized on the frame; they use full-range BT.601 with nearest-neighbour
chroma upsampling.
"""
from __future__ import annotations

import contextlib
import glob
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import BinaryIO, Callable, Iterator, Optional

import numpy as np

from .errors import (
    BadFrameMarker,
    InconsistentDimensions,
    MalformedNetpbm,
    MalformedParam,
    MissingSignature,
    NoFilesMatched,
    TruncatedFrame,
    UnsupportedChroma,
)

SIGNATURE = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"
_MAX_LINE = 4096

# Y4M C-tags accepted per subsampling family. Alpha and mono variants are rejected.
_CHROMA_TAGS = {
    "420": 420, "420jpeg": 420, "420paldv": 420, "420mpeg2": 420,
    "422": 422,
    "444": 444,
}
_CHROMA_OUT_TAG = {420: "420jpeg", 422: "422", 444: "444"}


@dataclass(frozen=True)
class StreamInfo:
    width: int
    height: int
    fps_num: int = 25
    fps_den: int = 1
    chroma: int = 420
    frame_count_hint: Optional[int] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MalformedParam(f"non-positive geometry {self.width}x{self.height}")
        if self.fps_den <= 0:
            raise MalformedParam("frame rate denominator must be positive")
        if self.chroma not in (420, 422, 444):
            raise UnsupportedChroma(f"chroma {self.chroma!r}")

    @property
    def fps(self) -> Fraction:
        return Fraction(self.fps_num, self.fps_den)

    @property
    def chroma_shape(self) -> tuple[int, int]:
        return chroma_shape(self.width, self.height, self.chroma)

    @property
    def frame_size(self) -> int:
        ch, cw = self.chroma_shape
        return self.width * self.height + 2 * ch * cw

    def header(self) -> bytes:
        return (
            f"YUV4MPEG2 W{self.width} H{self.height} F{self.fps_num}:{self.fps_den} "
            f"Ip A1:1 C{_CHROMA_OUT_TAG[self.chroma]}\n"
        ).encode("ascii")


def chroma_shape(width: int, height: int, chroma: int) -> tuple[int, int]:
    """(rows, cols) of each chroma plane for the given subsampling tag."""
    if chroma == 420:
        return (height + 1) // 2, (width + 1) // 2
    if chroma == 422:
        return height, (width + 1) // 2
    if chroma == 444:
        return height, width
    raise UnsupportedChroma(f"chroma {chroma!r}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint8)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded frame. Planes are read-only uint8 arrays."""

    index: int
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    chroma: int = 420
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y))
        object.__setattr__(self, "u", _readonly(self.u))
        object.__setattr__(self, "v", _readonly(self.v))
        if self.y.ndim != 2:
            raise MalformedParam("luma plane must be 2-D")
        expected = chroma_shape(self.width, self.height, self.chroma)
        if self.u.shape != expected or self.v.shape != expected:
            raise MalformedParam(
                f"chroma planes {self.u.shape}/{self.v.shape} do not match {expected} for C{self.chroma}"
            )

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.y.shape

    @property
    def gray(self) -> np.ndarray:
        return self.y

    @cached_property
    def rgb(self) -> np.ndarray:
        out = yuv_to_rgb(self.y, self.u, self.v)
        out.setflags(write=False)
        return out

    @cached_property
    def hsv(self) -> np.ndarray:
        out = rgb_to_hsv(self.rgb)
        out.setflags(write=False)
        return out

    def memo(self, key, compute: Callable[["Frame"], object]):
        """Per-frame cache for derived quantities. Racing first calls compute the same value."""
        try:
            return self._memo[key]
        except KeyError:
            value = compute(self)
            return self._memo.setdefault(key, value)

    def with_index(self, index: int) -> "Frame":
        return Frame(index, self.y, self.u, self.v, self.chroma)

    def planes_equal(self, other: "Frame") -> bool:
        return (
            self.chroma == other.chroma
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )


# ---------------------------------------------------------------------------
# color conversion


def upsample_chroma(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour upsampling of a chroma plane to luma geometry."""
    ry = -(-height // plane.shape[0])
    rx = -(-width // plane.shape[1])
    if ry > 1:
        plane = np.repeat(plane, ry, axis=0)
    if rx > 1:
        plane = np.repeat(plane, rx, axis=1)
    return plane[:height, :width]


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-range BT.601 inverse; returns an (H, W, 3) uint8 array."""
    h, w = y.shape
    yf = y.astype(np.float64)
    uf = upsample_chroma(u, h, w).astype(np.float64) - 128.0
    vf = upsample_chroma(v, h, w).astype(np.float64) - 128.0
    r = yf + 1.402 * vf
    g = yf - 0.344136 * uf - 0.714136 * vf
    b = yf + 1.772 * uf
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(_round_half_up(rgb), 0, 255).astype(np.uint8)


def rgb_to_yuv(rgb: np.ndarray, chroma: int = 444) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-range BT.601 forward transform; chroma is box-averaged when subsampled."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    v = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    h, w = y.shape
    u = _subsample(u, h, w, chroma)
    v = _subsample(v, h, w, chroma)

    def q(a):
        return np.clip(_round_half_up(a), 0, 255).astype(np.uint8)

    return q(y), q(u), q(v)


def _subsample(plane: np.ndarray, height: int, width: int, chroma: int) -> np.ndarray:
    if chroma == 444:
        return plane
    ch, cw = chroma_shape(width, height, chroma)
    fy = 2 if chroma == 420 else 1
    padded = np.pad(plane, ((0, ch * fy - height), (0, cw * 2 - width)), mode="edge")
    return padded.reshape(ch, fy, cw, 2).mean(axis=(1, 3))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 RGB to float HSV with H in [0, 360) degrees, S and V in [0, 1].

    Achromatic pixels (S == 0 or V == 0) get H = 0.
    """
    c = rgb.astype(np.int32)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    mx = c.max(axis=-1)
    mn = c.min(axis=-1)
    delta = mx - mn
    safe_delta = np.where(delta == 0, 1, delta).astype(np.float64)
    hr = (g - b) / safe_delta
    hr = np.where(hr < 0, hr + 6.0, hr)
    hg = (b - r) / safe_delta + 2.0
    hb = (r - g) / safe_delta + 4.0
    hue = np.select([mx == r, mx == g], [hr, hg], default=hb) * 60.0
    hue = np.where(delta == 0, 0.0, hue)
    sat = np.where(mx == 0, 0.0, delta / np.where(mx == 0, 1, mx).astype(np.float64))
    val = mx / 255.0
    return np.stack([hue, sat, val], axis=-1)


def convert(frame: Frame, target: str) -> np.ndarray:
    """Return the frame's plane set in `target` colorspace: "gray", "rgb" or "hsv"."""
    if target == "gray":
        return frame.gray
    if target == "rgb":
        return frame.rgb
    if target == "hsv":
        return frame.hsv
    raise ValueError(f"unknown colorspace {target!r}")


# ---------------------------------------------------------------------------
# YUV4MPEG2


def _parse_rate(text: str) -> tuple[int, int]:
    num, sep, den = text.partition(":")
    if not sep:
        raise MalformedParam(f"bad frame rate {text!r}")
    try:
        n, d = int(num), int(den)
    except ValueError:
        raise MalformedParam(f"bad frame rate {text!r}") from None
    if n <= 0 or d <= 0:
        raise MalformedParam(f"bad frame rate {text!r}")
    return n, d


def parse_y4m_header(data: bytes) -> StreamInfo:
    """Parse the stream header line (everything up to the first newline)."""
    if data[: len(SIGNATURE)] != SIGNATURE:
        raise MissingSignature("stream does not start with YUV4MPEG2")
    end = data.find(b"\n")
    if end < 0:
        raise MalformedParam("header line is not newline-terminated")
    line = data[len(SIGNATURE):end].decode("ascii", errors="replace")
    width = height = None
    fps = (25, 1)
    chroma = 420
    for token in line.split():
        key, val = token[0], token[1:]
        if key in "WH":
            try:
                n = int(val)
            except ValueError:
                raise MalformedParam(f"bad {key} parameter {val!r}") from None
            if key == "W":
                width = n
            else:
                height = n
        elif key == "F":
            fps = _parse_rate(val)
        elif key == "C":
            if val not in _CHROMA_TAGS:
                raise UnsupportedChroma(f"chroma tag {val!r}")
            chroma = _CHROMA_TAGS[val]
    if width is None or height is None:
        raise MalformedParam("header lacks W or H")
    if width <= 0 or height <= 0:
        raise MalformedParam(f"non-positive geometry {width}x{height}")
    return StreamInfo(width, height, fps[0], fps[1], chroma)


def _read_line(stream: BinaryIO) -> bytes:
    line = stream.readline(_MAX_LINE)
    return line


class Y4MReader:
    """Sequential reader over a YUV4MPEG2 byte stream.

    >>> reader = Y4MReader(open("clip.y4m", "rb"))   # doctest: +SKIP
    >>> for frame in reader: ...                     # doctest: +SKIP
    """

    def __init__(self, stream: BinaryIO, frame_count_hint: Optional[int] = None):
        self._stream = stream
        header = _read_line(stream)
        if header[: len(SIGNATURE)] != SIGNATURE:
            raise MissingSignature("stream does not start with YUV4MPEG2")
        info = parse_y4m_header(header)
        if frame_count_hint is not None:
            info = StreamInfo(info.width, info.height, info.fps_num, info.fps_den,
                              info.chroma, frame_count_hint)
        self.info = info
        self._next_index = 0

    def next_frame(self) -> Optional[Frame]:
        """Read the next frame; None at a clean end of stream."""
        marker = _read_line(self._stream)
        if not marker:
            return None
        if not marker.startswith(FRAME_MARKER) or not marker.endswith(b"\n"):
            if FRAME_MARKER.startswith(marker.rstrip(b"\n")) and not marker.endswith(b"\n"):
                raise TruncatedFrame(f"stream ends inside frame marker {self._next_index}")
            raise BadFrameMarker(f"expected FRAME marker, got {marker[:16]!r}")
        info = self.info
        ch, cw = info.chroma_shape
        luma = info.width * info.height
        size = luma + 2 * ch * cw
        payload = self._stream.read(size)
        if len(payload) != size:
            raise TruncatedFrame(
                f"frame {self._next_index}: expected {size} octets, got {len(payload)}"
            )
        buf = np.frombuffer(payload, dtype=np.uint8)
        y = buf[:luma].reshape(info.height, info.width)
        u = buf[luma: luma + ch * cw].reshape(ch, cw)
        v = buf[luma + ch * cw:].reshape(ch, cw)
        frame = Frame(self._next_index, y, u, v, info.chroma)
        self._next_index += 1
        return frame

    def __iter__(self) -> Iterator[Frame]:
        while True:
            frame = self.next_frame()
            if frame is None:
                return
            yield frame


@contextlib.contextmanager
def open_y4m(path) -> Iterator[Y4MReader]:
    """Open a Y4M file (or standard input for "-") as a Y4MReader."""
    if str(path) == "-":
        yield Y4MReader(sys.stdin.buffer)
        return
    with open(path, "rb") as fh:
        reader = Y4MReader(fh)
        try:
            total = os.fstat(fh.fileno()).st_size
            per_frame = reader.info.frame_size + len(FRAME_MARKER) + 1
            hint = (total - fh.tell()) // per_frame
            reader.info = StreamInfo(
                reader.info.width, reader.info.height, reader.info.fps_num,
                reader.info.fps_den, reader.info.chroma, hint,
            )
        except OSError:
            pass
        yield reader


def write_y4m(frames, info: StreamInfo, sink: BinaryIO) -> int:
    """Write frames as a YUV4MPEG2 stream; returns the number of frames written."""
    from .errors import GeometryMismatch

    sink.write(info.header())
    count = 0
    expected_c = info.chroma_shape
    for frame in frames:
        if (
            frame.shape != (info.height, info.width)
            or frame.chroma != info.chroma
            or frame.u.shape != expected_c
        ):
            raise GeometryMismatch(
                f"frame {frame.index} is {frame.width}x{frame.height} C{frame.chroma}, "
                f"stream is {info.width}x{info.height} C{info.chroma}"
            )
        sink.write(FRAME_MARKER + b"\n")
        sink.write(frame.y.tobytes())
        sink.write(frame.u.tobytes())
        sink.write(frame.v.tobytes())
        count += 1
    return count


# ---------------------------------------------------------------------------
# Netpbm sequences


def _netpbm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedNetpbm("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace octet separates header from raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise MalformedNetpbm("header not followed by whitespace")
    return tokens, pos + 1


def read_netpbm(path) -> np.ndarray:
    """Read a binary P5 (gray, HxW) or P6 (RGB, HxWx3) file with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise MalformedNetpbm(f"{path}: not a binary PGM/PPM file")
    try:
        tokens, offset = _netpbm_tokens(data[2:], 3)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedNetpbm(f"{path}: bad header") from None
    if width <= 0 or height <= 0:
        raise MalformedNetpbm(f"{path}: bad geometry")
    if maxval != 255:
        raise MalformedNetpbm(f"{path}: maxval {maxval} unsupported (need 255)")
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    raster = data[2 + offset: 2 + offset + size]
    if len(raster) != size:
        raise MalformedNetpbm(f"{path}: truncated raster")
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3)
    return arr.reshape(height, width)


def read_image_sequence(pattern: str) -> Iterator[Frame]:
    """Yield frames from Netpbm files matching a glob pattern, in filename order.

    PPM files are converted to 4:4:4 YUV; PGM files fill luma only with chroma 128.
    """
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise NoFilesMatched(f"no files match {pattern!r}")
    shape = None
    for index, path in enumerate(paths):
        img = read_netpbm(path)
        if shape is None:
            shape = img.shape[:2]
        elif img.shape[:2] != shape:
            raise InconsistentDimensions(
                f"{path} is {img.shape[1]}x{img.shape[0]}, expected {shape[1]}x{shape[0]}"
            )
        if img.ndim == 3:
            y, u, v = rgb_to_yuv(img, 444)
        else:
            y = img
            u = np.full_like(img, 128)
            v = np.full_like(img, 128)
        yield Frame(index, y, u, v, 444)


def write_netpbm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    magic = b"P6" if img.ndim == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
