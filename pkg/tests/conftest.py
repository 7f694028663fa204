import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shotbound.frameio import Frame, rgb_to_yuv  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def frame_from_rgb(rgb, index=0, chroma=444):
    rgb = np.asarray(rgb)
    return Frame(index, *rgb_to_yuv(rgb, chroma), chroma)


def frame_from_gray(gray, index=0):
    y = np.asarray(gray, dtype=np.uint8)
    neutral = np.full_like(y, 128)
    return Frame(index, y, neutral, neutral.copy(), 444)


def solid_rgb(color, shape=(32, 32), index=0):
    return frame_from_rgb(np.broadcast_to(np.asarray(color, np.uint8), shape + (3,)), index)


def random_yuv_frame(rng, h=16, w=16, chroma=420, index=0):
    """Random planes in one of a few textures so edge and block metrics see varied input."""
    kind = rng.integers(4)
    if kind == 0:
        y = rng.integers(0, 256, (h, w))
    elif kind == 1:
        yy, xx = np.mgrid[0:h, 0:w]
        y = (rng.uniform(-12, 12) * xx + rng.uniform(-12, 12) * yy + rng.uniform(0, 255)) % 256
        y = y + rng.normal(0, 4, (h, w))
    elif kind == 2:
        y = rng.choice(rng.integers(0, 256, 3), size=(h // 4 + 1, w // 4 + 1))
        y = np.repeat(np.repeat(y, 4, axis=0), 4, axis=1)[:h, :w]
    else:
        y = np.full((h, w), rng.integers(0, 256)) + rng.integers(-3, 4, (h, w))
    ch = h // 2 if chroma == 420 else h
    cw = w // 2 if chroma in (420, 422) else w
    u = rng.integers(0, 256, (ch, cw))
    v = rng.integers(0, 256, (ch, cw))
    q = lambda a: np.clip(np.rint(a), 0, 255).astype(np.uint8)  # noqa: E731
    return Frame(index, q(y), q(u), q(v), chroma)


def perturb(rng, frame, index=1):
    """A frame near `frame`: small noise, sometimes a shifted or replaced region."""
    y = frame.y.astype(np.int64)
    kind = rng.integers(3)
    if kind == 0:
        y = y + rng.integers(-20, 21, y.shape)
    elif kind == 1:
        y = np.roll(y, int(rng.integers(1, 4)), axis=int(rng.integers(2)))
    else:
        r, c = rng.integers(0, y.shape[0] - 4), rng.integers(0, y.shape[1] - 4)
        y[r:r + 6, c:c + 6] = rng.integers(0, 256)
    u = frame.u.astype(np.int64) + rng.integers(-10, 11, frame.u.shape)
    v = frame.v.astype(np.int64) + rng.integers(-10, 11, frame.v.shape)
    q = lambda a: np.clip(a, 0, 255).astype(np.uint8)  # noqa: E731
    return Frame(index, q(y), q(u), q(v), frame.chroma)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
