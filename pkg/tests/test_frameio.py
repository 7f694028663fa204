import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shotbound import frameio
from shotbound.errors import (
    BadFrameMarker,
    InconsistentDimensions,
    MalformedNetpbm,
    MalformedParam,
    MissingSignature,
    NoFilesMatched,
    TruncatedFrame,
    UnsupportedChroma,
)
from shotbound.frameio import Frame, StreamInfo, Y4MReader, parse_y4m_header, write_y4m

import oracles
from conftest import random_yuv_frame


def _frame(y, u, v, chroma=444, index=0):
    return Frame(index, np.asarray(y, np.uint8), np.asarray(u, np.uint8), np.asarray(v, np.uint8), chroma)


def _const(y, u, v, shape=(2, 2)):
    return _frame(np.full(shape, y), np.full(shape, u), np.full(shape, v))


# header parsing

def test_header_full():
    info = parse_y4m_header(b"YUV4MPEG2 W320 H240 F25:1 Ip A1:1 C420jpeg\n")
    assert (info.width, info.height, info.fps_num, info.fps_den, info.chroma) == (320, 240, 25, 1, 420)


def test_header_default_chroma():
    info = parse_y4m_header(b"YUV4MPEG2 W16 H16 F30000:1001\n")
    assert (info.width, info.height, info.chroma) == (16, 16, 420)
    assert info.fps == Fraction(30000, 1001)


def test_header_unknown_params_ignored():
    info = parse_y4m_header(b"YUV4MPEG2 W8 H6 XYSCSS=444 C444 Ip\n")
    assert (info.width, info.height, info.chroma) == (8, 6, 444)


@pytest.mark.parametrize("data,err", [
    (b"JUNK W1 H1\n", MissingSignature),
    (b"YUV4MPEG2 Wabc H4\n", MalformedParam),
    (b"YUV4MPEG2 W4 H4 F25\n", MalformedParam),
    (b"YUV4MPEG2 W4 H4 F25:0\n", MalformedParam),
    (b"YUV4MPEG2 H4\n", MalformedParam),
    (b"YUV4MPEG2 W4 H4 C411\n", UnsupportedChroma),
    (b"YUV4MPEG2 W4 H4 Cmono\n", UnsupportedChroma),
])
def test_header_errors(data, err):
    with pytest.raises(err):
        parse_y4m_header(data)


# frame reading

def _stream(payload_frames, header=b"YUV4MPEG2 W4 H4 F25:1 C420\n"):
    return io.BytesIO(header + b"".join(payload_frames))


def test_read_4x4_420():
    payload = bytes(range(24))
    reader = Y4MReader(_stream([b"FRAME\n" + payload, b"FRAME Ixyz\n" + payload]))
    f0 = reader.next_frame()
    assert f0.index == 0
    assert f0.y.shape == (4, 4) and f0.u.shape == (2, 2) and f0.v.shape == (2, 2)
    assert f0.y.ravel().tolist() == list(range(16))
    assert f0.u.ravel().tolist() == [16, 17, 18, 19]
    f1 = reader.next_frame()
    assert f1.index == 1
    assert reader.next_frame() is None


def test_truncated_payload():
    reader = Y4MReader(_stream([b"FRAME\n" + bytes(23)]))
    with pytest.raises(TruncatedFrame):
        reader.next_frame()


def test_bad_marker():
    reader = Y4MReader(_stream([b"FRAMX\n" + bytes(24)]))
    with pytest.raises(BadFrameMarker):
        reader.next_frame()


def test_frame_planes_read_only():
    reader = Y4MReader(_stream([b"FRAME\n" + bytes(24)]))
    f = reader.next_frame()
    with pytest.raises(ValueError):
        f.y[0, 0] = 1


def test_indices_contiguous(rng):
    info = StreamInfo(16, 16, chroma=420)
    frames = [random_yuv_frame(rng, index=i) for i in range(7)]
    buf = io.BytesIO()
    write_y4m(frames, info, buf)
    buf.seek(0)
    assert [f.index for f in Y4MReader(buf)] == list(range(7))


def test_write_single_4x4():
    info = StreamInfo(4, 4, chroma=420)
    f = _frame(np.zeros((4, 4)), np.zeros((2, 2)), np.zeros((2, 2)), chroma=420)
    buf = io.BytesIO()
    assert write_y4m([f], info, buf) == 1
    data = buf.getvalue()
    header = info.header()
    assert data.startswith(header)
    assert data[len(header):] == b"FRAME\n" + bytes(24)


def test_write_empty():
    info = StreamInfo(4, 4)
    buf = io.BytesIO()
    write_y4m([], info, buf)
    assert buf.getvalue() == info.header()


@settings(max_examples=25, deadline=None)
@given(
    w=st.integers(1, 12), h=st.integers(1, 12), chroma=st.sampled_from([420, 422, 444]),
    n=st.integers(0, 3), seed=st.integers(0, 2**32 - 1),
)
def test_roundtrip_any_geometry(w, h, chroma, n, seed):
    r = np.random.default_rng(seed)
    ch, cw = frameio.chroma_shape(w, h, chroma)
    frames = [
        _frame(r.integers(0, 256, (h, w)), r.integers(0, 256, (ch, cw)), r.integers(0, 256, (ch, cw)), chroma, i)
        for i in range(n)
    ]
    info = StreamInfo(w, h, 30000, 1001, chroma)
    buf = io.BytesIO()
    write_y4m(frames, info, buf)
    buf.seek(0)
    reader = Y4MReader(buf)
    assert reader.info.width == w and reader.info.chroma == chroma
    back = list(reader)
    assert len(back) == n
    assert all(a.planes_equal(b) for a, b in zip(frames, back))


def test_open_y4m_hint(tmp_path, rng):
    info = StreamInfo(16, 16)
    path = tmp_path / "x.y4m"
    with open(path, "wb") as fh:
        write_y4m([random_yuv_frame(rng, index=i) for i in range(5)], info, fh)
    with frameio.open_y4m(path) as reader:
        assert reader.info.frame_count_hint == 5
        assert len(list(reader)) == 5


# colour conversion

def test_neutral_gray():
    assert _const(128, 128, 128).rgb[0, 0].tolist() == [128, 128, 128]


def test_white_hsv():
    hsv = _const(255, 128, 128).hsv[0, 0]
    assert hsv[2] == 1.0 and hsv[1] == 0.0


def test_saturated_red_example():
    # G = 81 - 0.344136*(-38) - 0.714136*112 = 14.09 -> 14
    r = 81 + 1.402 * 112
    g = 81 - 0.344136 * (90 - 128) - 0.714136 * (240 - 128)
    b = 81 + 1.772 * (90 - 128)
    assert (round(r), round(g), round(b)) == (238, 14, 14)
    assert _const(81, 90, 240).rgb[0, 0].tolist() == [238, 14, 14]


def test_gray_view_is_luma(rng):
    f = random_yuv_frame(rng)
    assert frameio.convert(f, "gray") is f.y
    with pytest.raises(ValueError):
        frameio.convert(f, "lab")


@pytest.mark.parametrize("chroma", [420, 422, 444])
def test_rgb_matches_oracle(rng, chroma):
    for _ in range(20):
        f = random_yuv_frame(rng, 16, 16, chroma)
        assert f.rgb.tolist() == [[list(p) for p in row] for row in oracles.frame_rgb(f)]


def test_hsv_matches_colorsys(rng):
    f = random_yuv_frame(rng)
    rgb = f.rgb.tolist()
    for i in range(f.height):
        for j in range(f.width):
            want = oracles.pixel_hsv(rgb[i][j])
            assert f.hsv[i, j].tolist() == pytest.approx(want, abs=1e-12)


def test_hsv_value_is_max_channel(rng):
    f = random_yuv_frame(rng)
    assert np.array_equal(f.hsv[..., 2], f.rgb.max(axis=-1) / 255.0)
    assert np.all((f.hsv[..., 0] >= 0) & (f.hsv[..., 0] < 360))


def test_achromatic_hue_zero():
    rgb = np.array([[[0, 0, 0], [90, 90, 90], [255, 255, 255]]], dtype=np.uint8)
    hsv = frameio.rgb_to_hsv(rgb)
    assert hsv[..., 0].tolist() == [[0.0, 0.0, 0.0]]
    assert hsv[..., 1].tolist() == [[0.0, 0.0, 0.0]]


def test_rgb_yuv_rgb_close(rng):
    rgb = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    f = Frame(0, *frameio.rgb_to_yuv(rgb, 444), 444)
    assert np.abs(f.rgb.astype(int) - rgb).max() <= 2


def test_upsample_nearest():
    plane = np.array([[1, 2], [3, 4]], dtype=np.uint8)
    up = frameio.upsample_chroma(plane, 3, 4)
    assert up.tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4]]


def test_frame_rejects_bad_chroma_shape():
    with pytest.raises(MalformedParam):
        _frame(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)), chroma=420)


# netpbm

def test_ppm_sequence(tmp_path, rng):
    for i in range(3):
        frameio.write_netpbm(tmp_path / f"f{i:03d}.ppm", rng.integers(0, 256, (8, 8, 3)))
    frames = list(frameio.read_image_sequence(str(tmp_path / "*.ppm")))
    assert [f.index for f in frames] == [0, 1, 2]
    assert frames[0].shape == (8, 8)


def test_pgm_constant(tmp_path):
    frameio.write_netpbm(tmp_path / "a.pgm", np.full((5, 7), 77))
    (f,) = frameio.read_image_sequence(str(tmp_path / "a.pgm"))
    assert np.all(f.y == 77) and np.all(f.u == 128) and np.all(f.v == 128)


def test_pgm_with_comment(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x06")
    assert frameio.read_netpbm(path).tolist() == [[5, 6]]


def test_mixed_dimensions(tmp_path):
    frameio.write_netpbm(tmp_path / "a.pgm", np.zeros((8, 8)))
    frameio.write_netpbm(tmp_path / "b.pgm", np.zeros((16, 16)))
    with pytest.raises(InconsistentDimensions):
        list(frameio.read_image_sequence(str(tmp_path / "*.pgm")))


def test_no_files(tmp_path):
    with pytest.raises(NoFilesMatched):
        list(frameio.read_image_sequence(str(tmp_path / "*.ppm")))


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0 0 0", b"P5\n2 2\n65535\n" + bytes(8), b"P5\n2 2\n255\n\x00"])
def test_malformed_netpbm(tmp_path, data):
    path = tmp_path / "bad.pgm"
    path.write_bytes(data)
    with pytest.raises(MalformedNetpbm):
        frameio.read_netpbm(path)
