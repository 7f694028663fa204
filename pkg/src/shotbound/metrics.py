"""Frame-difference features for shot boundary detection.

Six metric families are computed for a pair of consecutive frames:

* ``blockmean`` / ``blockstd``: mean absolute change of per-block luma mean and
  standard deviation on a regular grid.
* ``cumedge``: L1 distance between cumulative histograms of trapezoid-weighted
  Sobel magnitudes, per block.
* ``colordiff``: per-bin absolute difference of normalized R, G and B histograms
  (a vector of length 3*n).
* ``edgeblock``: fraction of 10x10 grid blocks whose edge density changed by
  more than a threshold.
* ``bhatta``: Bhattacharyya distance between luma histograms.
* ``content``: mean HSV component change, hue measured on the circle.

All scalars are in [0, 1], are zero for identical frames and symmetric in their
arguments. Per-frame intermediate results are memoized on the frame so a stream
pays for each one once.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import FrameTooSmall, GeometryMismatch, PlaneTooSmall
from .frameio import Frame

SOBEL_NORM = 4.0 * math.sqrt(2.0)
SCALAR_NAMES = ("blockmean", "blockstd", "cumedge", "edgeblock", "bhatta", "content")


@dataclass(frozen=True)
class MetricConfig:
    color_bins: int = 16
    edge_bins: int = 16
    luma_bins: int = 32
    stats_grid: int = 8
    cum_grid: int = 4
    edge_grid: int = 10
    edge_thresh: float = 64.0
    block_thresh: float = 0.15
    radius: int = 2

    def __post_init__(self):
        if min(self.color_bins, self.edge_bins, self.luma_bins) < 2:
            raise ValueError("histograms need at least 2 bins")
        if min(self.stats_grid, self.cum_grid, self.edge_grid) < 1:
            raise ValueError("grids need at least one block per side")
        if self.radius < 1:
            raise ValueError("context radius must be >= 1")


DEFAULT_CONFIG = MetricConfig()


def _check_geometry(prev: Frame, cur: Frame) -> None:
    if prev.shape != cur.shape:
        raise GeometryMismatch(
            f"frames {prev.index} and {cur.index} differ in size: {prev.shape} vs {cur.shape}"
        )


def block_starts(n: int, blocks: int) -> np.ndarray:
    """Start offsets of `blocks` equal blocks over n pixels; the last absorbs the remainder."""
    size = n // blocks
    if size < 1:
        raise FrameTooSmall(f"{n} pixels cannot hold {blocks} blocks")
    return np.arange(blocks) * size


def block_sizes(n: int, blocks: int) -> np.ndarray:
    starts = block_starts(n, blocks)
    return np.diff(np.append(starts, n))


def block_sum(a: np.ndarray, grid: int) -> np.ndarray:
    rows = block_starts(a.shape[0], grid)
    cols = block_starts(a.shape[1], grid)
    return np.add.reduceat(np.add.reduceat(a, rows, axis=0), cols, axis=1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=32)
def block_ids(height: int, width: int, grid: int) -> np.ndarray:
    """Row-major block number of every pixel."""
    ry = np.repeat(np.arange(grid), block_sizes(height, grid))
    rx = np.repeat(np.arange(grid), block_sizes(width, grid))
    return _frozen(ry[:, None] * grid + rx[None, :])


@lru_cache(maxsize=32)
def block_areas(height: int, width: int, grid: int) -> np.ndarray:
    """Pixel count of every block, shape (grid, grid)."""
    return _frozen(np.outer(block_sizes(height, grid), block_sizes(width, grid)))


# ---------------------------------------------------------------------------
# Sobel


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude scaled to [0, 255], edge-replicated borders."""
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise PlaneTooSmall(f"Sobel needs at least 3x3, got {gray.shape}")
    p = np.pad(gray.astype(np.int32), 1, mode="edge")
    left = p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]
    right = p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]
    top = p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]
    bottom = p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]
    gx = (right - left).astype(np.float64)
    gy = (bottom - top).astype(np.float64)
    mag = np.sqrt(gx * gx + gy * gy) / SOBEL_NORM
    return np.minimum(mag, 255.0)


def _sobel(frame: Frame) -> np.ndarray:
    return frame.memo("sobel", lambda f: sobel_magnitude(f.gray))


# ---------------------------------------------------------------------------
# block statistics


def _block_stats(frame: Frame, grid: int) -> tuple[np.ndarray, np.ndarray]:
    def compute(f: Frame):
        y = f.gray.astype(np.int64)
        n = block_areas(f.height, f.width, grid)
        s1 = block_sum(y, grid)
        s2 = block_sum(y * y, grid)
        # integer numerator keeps the variance exact (and exactly 0 for flat blocks)
        var = (n * s2 - s1 * s1) / (n * n).astype(np.float64)
        return s1 / n, np.sqrt(var)

    return frame.memo(("blockstats", grid), compute)


def block_stats_metric(prev: Frame, cur: Frame, grid: int = 8) -> tuple[float, float]:
    """(mean |delta block mean|, mean |delta block std|), both divided by 255."""
    _check_geometry(prev, cur)
    if prev.height < grid or prev.width < grid:
        raise FrameTooSmall(f"frame {prev.shape} smaller than {grid}x{grid} grid")
    mp, sp = _block_stats(prev, grid)
    mc, sc = _block_stats(cur, grid)
    d_mean = float(np.mean(np.abs(mc - mp))) / 255.0
    d_std = float(np.mean(np.abs(sc - sp))) / 255.0
    return d_mean, d_std


# ---------------------------------------------------------------------------
# cumulative edge histogram


def trapezoid_axis(n: int, grid: int) -> np.ndarray:
    """Per-pixel weight along one axis: 1 over the central half of a block, linear to 0 at its edges."""
    weights = np.empty(n, dtype=np.float64)
    for start, size in zip(block_starts(n, grid), block_sizes(n, grid)):
        u = (np.arange(size) + 0.5) / size
        weights[start:start + size] = np.minimum(1.0, np.minimum(4.0 * u, 4.0 * (1.0 - u)))
    return weights


@lru_cache(maxsize=32)
def trapezoid_weights(height: int, width: int, grid: int) -> np.ndarray:
    return _frozen(trapezoid_axis(height, grid)[:, None] * trapezoid_axis(width, grid)[None, :])


def cumulative_block_histograms(weighted: np.ndarray, grid: int, bins: int) -> np.ndarray:
    """Cumulative normalized histograms of values in [0, 255], one row per block."""
    h, w = weighted.shape
    idx = np.minimum(np.floor(weighted * bins / 255.0), bins - 1).astype(np.int64)
    ids = block_ids(h, w, grid)
    counts = np.bincount((ids * bins + idx).ravel(), minlength=grid * grid * bins)
    counts = counts.reshape(grid * grid, bins)
    sizes = block_areas(h, w, grid).ravel()
    return np.cumsum(counts / sizes[:, None], axis=1)


def cumulative_histogram_distance(ca: np.ndarray, cb: np.ndarray) -> float:
    bins = ca.shape[1]
    per_block = np.abs(ca - cb).sum(axis=1) / (bins - 1)
    return min(1.0, max(0.0, float(np.mean(per_block))))


def _cum_hist(frame: Frame, grid: int, bins: int) -> np.ndarray:
    def compute(f: Frame):
        weighted = _sobel(f) * trapezoid_weights(f.height, f.width, grid)
        return cumulative_block_histograms(weighted, grid, bins)

    return frame.memo(("cumhist", grid, bins), compute)


def cumulative_edge_histogram_metric(prev: Frame, cur: Frame, grid: int = 4, bins: int = 16) -> float:
    _check_geometry(prev, cur)
    if prev.height < max(grid, 3) or prev.width < max(grid, 3):
        raise FrameTooSmall(f"frame {prev.shape} too small for {grid}x{grid} grid")
    return cumulative_histogram_distance(_cum_hist(prev, grid, bins), _cum_hist(cur, grid, bins))


# ---------------------------------------------------------------------------
# color histogram difference vector


def _rgb_hist(frame: Frame, bins: int) -> np.ndarray:
    def compute(f: Frame):
        q = f.rgb.astype(np.int64) * bins // 256
        out = np.empty((3, bins), dtype=np.float64)
        total = f.width * f.height
        for c in range(3):
            out[c] = np.bincount(q[..., c].ravel(), minlength=bins) / total
        return out

    return frame.memo(("rgbhist", bins), compute)


def color_hist_diff_vector(prev: Frame, cur: Frame, bins: int = 16) -> np.ndarray:
    """|H_cur - H_prev| per channel and bin, flattened R bins then G then B."""
    _check_geometry(prev, cur)
    return np.abs(_rgb_hist(cur, bins) - _rgb_hist(prev, bins)).ravel()


# ---------------------------------------------------------------------------
# edge block histogram


def _edge_density(frame: Frame, grid: int, edge_thresh: float) -> np.ndarray:
    def compute(f: Frame):
        edges = (_sobel(f) >= edge_thresh).astype(np.int64)
        return block_sum(edges, grid) / block_areas(f.height, f.width, grid)

    return frame.memo(("edgedensity", grid, edge_thresh), compute)


def edge_block_histogram_metric(
    prev: Frame,
    cur: Frame,
    edge_thresh: float = 64.0,
    block_thresh: float = 0.15,
    grid: int = 10,
) -> float:
    """Fraction of grid blocks whose edge-pixel density changed by more than block_thresh."""
    _check_geometry(prev, cur)
    if prev.height < grid or prev.width < grid:
        raise FrameTooSmall(f"frame {prev.shape} smaller than {grid}x{grid} grid")
    dp = _edge_density(prev, grid, edge_thresh)
    dc = _edge_density(cur, grid, edge_thresh)
    return float(np.count_nonzero(np.abs(dc - dp) > block_thresh)) / (grid * grid)


# ---------------------------------------------------------------------------
# Bhattacharyya


def luma_histogram(frame: Frame, bins: int = 32) -> np.ndarray:
    """Integer pixel counts of the luma plane over `bins` equal bins."""
    return frame.memo(
        ("lumahist", bins),
        lambda f: np.bincount((f.gray.astype(np.int64) * bins // 256).ravel(), minlength=bins),
    )


def bhattacharyya_distance(p_counts: np.ndarray, q_counts: np.ndarray) -> float:
    """sqrt(1 - BC) between two histograms given as raw counts."""
    p = np.asarray(p_counts, dtype=np.float64)
    q = np.asarray(q_counts, dtype=np.float64)
    total = math.sqrt(p.sum() * q.sum())
    if total == 0:
        return 0.0 if p.sum() == q.sum() else 1.0
    bc = float(np.sqrt(p * q).sum()) / total
    return math.sqrt(1.0 - min(bc, 1.0))


def bhattacharyya_metric(prev: Frame, cur: Frame, bins: int = 32) -> float:
    _check_geometry(prev, cur)
    return bhattacharyya_distance(luma_histogram(prev, bins), luma_histogram(cur, bins))


# ---------------------------------------------------------------------------
# HSV content delta


def content_delta_metric(prev: Frame, cur: Frame) -> float:
    _check_geometry(prev, cur)
    a, b = prev.hsv, cur.hsv
    dh = np.abs(a[..., 0] - b[..., 0])
    dh = np.minimum(dh, 360.0 - dh)
    ds = np.abs(a[..., 1] - b[..., 1])
    dv = np.abs(a[..., 2] - b[..., 2])
    return (float(np.mean(dh)) / 180.0 + float(np.mean(ds)) + float(np.mean(dv))) / 3.0


# ---------------------------------------------------------------------------
# feature assembly


def pair_metrics(prev: Frame, cur: Frame, config: MetricConfig = DEFAULT_CONFIG):
    """All metrics for one frame pair: (scalars in SCALAR_NAMES order, color diff vector)."""
    d_mean, d_std = block_stats_metric(prev, cur, config.stats_grid)
    scalars = np.array([
        d_mean,
        d_std,
        cumulative_edge_histogram_metric(prev, cur, config.cum_grid, config.edge_bins),
        edge_block_histogram_metric(prev, cur, config.edge_thresh, config.block_thresh, config.edge_grid),
        bhattacharyya_metric(prev, cur, config.luma_bins),
        content_delta_metric(prev, cur),
    ])
    return scalars, color_hist_diff_vector(prev, cur, config.color_bins)


def _offset(j: int) -> str:
    if j == 0:
        return "t"
    return f"t{j:+d}"


def pair_offsets(radius: int) -> list[int]:
    """Offset j of each pair (t+j-1, t+j) in a window of the given radius."""
    return list(range(-radius + 1, radius + 1))


def feature_schema(config: MetricConfig = DEFAULT_CONFIG) -> tuple[str, ...]:
    names: list[str] = []
    for j in pair_offsets(config.radius):
        tag = f"[{_offset(j - 1)},{_offset(j)}]"
        names.extend(f"{name}{tag}" for name in SCALAR_NAMES)
        if j == 0:
            names.extend(
                f"colordiff_{ch}{k:02d}{tag}" for ch in "rgb" for k in range(config.color_bins)
            )
        else:
            names.extend((f"colordiff_sum{tag}", f"colordiff_max{tag}"))
    return tuple(names)


def source_metric(name: str) -> str:
    """Metric family a schema slot belongs to, e.g. "colordiff_r03[t-1,t]" -> "colordiff"."""
    base = name.split("[", 1)[0]
    return base.split("_", 1)[0]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]
    center_index: int

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise ValueError("values and schema lengths differ")


def _pack_pair(out: list, j: int, scalars: np.ndarray, vec: np.ndarray) -> None:
    out.append(scalars)
    if j == 0:
        out.append(vec)
    else:
        out.append(np.array([vec.sum(), vec.max()]))


def assemble_features(window: Sequence[Frame], config: MetricConfig = DEFAULT_CONFIG) -> FeatureVector:
    """Feature vector for the middle frame of a window of 2*radius+1 frames.

    Callers replicate the first/last frame at stream edges.
    """
    r = config.radius
    if len(window) != 2 * r + 1:
        raise ValueError(f"window must hold {2 * r + 1} frames, got {len(window)}")
    parts: list[np.ndarray] = []
    for j in pair_offsets(r):
        scalars, vec = pair_metrics(window[r + j - 1], window[r + j], config)
        _pack_pair(parts, j, scalars, vec)
    return FeatureVector(np.concatenate(parts), feature_schema(config), window[r].index)


@dataclass
class FeatureTrack:
    """Feature vectors for every frame of one stream, plus per-frame luma histograms.

    The luma histograms let the post-filter compare non-adjacent frames without
    keeping the frames themselves.
    """

    schema: tuple[str, ...]
    values: np.ndarray
    luma_hists: Optional[np.ndarray] = None
    config: MetricConfig = field(default=DEFAULT_CONFIG)

    def __len__(self) -> int:
        return self.values.shape[0]

    def vector(self, t: int) -> FeatureVector:
        return FeatureVector(self.values[t], self.schema, t)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def frame_distance(self, a: int, b: int) -> float:
        """Bhattacharyya distance between the luma histograms of frames a and b."""
        if self.luma_hists is None:
            raise ValueError("track carries no luma histograms")
        return bhattacharyya_distance(self.luma_hists[a], self.luma_hists[b])


def extract_features(frames: Iterable[Frame], config: MetricConfig = DEFAULT_CONFIG) -> FeatureTrack:
    """Compute the feature track of a whole stream, holding only two frames at a time.

    Row t equals assemble_features() on the window around t with edge frames replicated.
    """
    scalars: list[np.ndarray] = []
    vectors: list[np.ndarray] = []
    hists: list[np.ndarray] = []
    prev: Optional[Frame] = None
    for frame in frames:
        hists.append(luma_histogram(frame, config.luma_bins))
        if prev is not None:
            s, v = pair_metrics(prev, frame, config)
            scalars.append(s)
            vectors.append(v)
        prev = frame
    schema = feature_schema(config)
    n = len(hists)
    if n == 0:
        return FeatureTrack(schema, np.zeros((0, len(schema))), np.zeros((0, config.luma_bins), np.int64), config)

    nvec = 3 * config.color_bins
    # pair k describes frames (k-1, k); pair 0 is the replicated (0, 0) pair and is all zero
    pair_s = np.zeros((n, len(SCALAR_NAMES)))
    pair_v = np.zeros((n, nvec))
    if n > 1:
        pair_s[1:] = np.array(scalars)
        pair_v[1:] = np.array(vectors)

    columns: list[np.ndarray] = []
    t = np.arange(n)
    for j in pair_offsets(config.radius):
        a = np.clip(t + j - 1, 0, n - 1)
        b = np.clip(t + j, 0, n - 1)
        k = np.where(a == b, 0, b)
        columns.append(pair_s[k])
        if j == 0:
            columns.append(pair_v[k])
        else:
            v = pair_v[k]
            columns.append(np.stack([v.sum(axis=1), v.max(axis=1)], axis=1))
    values = np.concatenate(columns, axis=1)
    return FeatureTrack(schema, values, np.array(hists), config)


# ---------------------------------------------------------------------------
# CSV dump


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def write_features_csv(track: FeatureTrack, sink, labels: Optional[Sequence[str]] = None,
                       indices: Optional[Sequence[int]] = None) -> None:
    """One row per frame: frame_index, values in schema order[, label]."""
    writer = csv.writer(sink, lineterminator="\n")
    header = ["frame_index", *track.schema]
    if labels is not None:
        header.append("label")
    writer.writerow(header)
    for t in range(len(track)):
        index = t if indices is None else indices[t]
        row = [str(index), *(_fmt(x) for x in track.values[t])]
        if labels is not None:
            row.append(labels[t])
        writer.writerow(row)


def read_features_csv(source) -> tuple[tuple[str, ...], np.ndarray, Optional[list[str]]]:
    reader = csv.reader(source)
    header = next(reader)
    has_label = header[-1] == "label"
    schema = tuple(header[1:-1] if has_label else header[1:])
    rows, labels = [], []
    for row in reader:
        if has_label:
            labels.append(row[-1])
            row = row[:-1]
        rows.append([float(x) for x in row[1:]])
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
    return schema, values, labels if has_label else None


def iter_feature_vectors(track: FeatureTrack) -> Iterator[FeatureVector]:
    for t in range(len(track)):
        yield track.vector(t)
