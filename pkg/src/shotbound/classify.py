"""Turn per-frame features into boundary events.

Three classification regimes are provided: a fixed threshold on one metric track,
a threshold adapted to the local neighbourhood of each frame, and a pair of
gradient-boosted tree models (one for cuts, one for gradual transitions) whose
per-frame probabilities are arbitrated into events. A post-filter merges
near-duplicate detections and drops cuts caused by flashes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .errors import MalformedEventFile, SchemaMismatch, WindowTooLarge
from .metrics import FeatureTrack, FeatureVector

CUT = "cut"
GRADUAL = "gradual"
MODEL_FORMAT_VERSION = 1

# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True, order=True)
class BoundaryEvent:
    start: int
    end: int
    kind: str = CUT
    confidence: float = 1.0

    def __post_init__(self):
        if self.kind not in (CUT, GRADUAL):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.start > self.end:
            raise ValueError(f"event span [{self.start}, {self.end}] is reversed")
        if self.kind == CUT and self.start != self.end:
            raise ValueError("a cut occupies a single frame")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @classmethod
    def cut(cls, frame: int, confidence: float = 1.0) -> "BoundaryEvent":
        return cls(frame, frame, CUT, confidence)

    @classmethod
    def gradual(cls, start: int, end: int, confidence: float = 1.0) -> "BoundaryEvent":
        return cls(start, end, GRADUAL, confidence)

    @property
    def frame(self) -> int:
        return self.start

    def line(self, with_confidence: bool = True) -> str:
        if self.kind == CUT:
            text = f"cut {self.start}"
        else:
            text = f"grad {self.start} {self.end}"
        if with_confidence:
            text += f" {self.confidence:.6f}"
        return text


def parse_events(lines: Iterable[str]) -> list[BoundaryEvent]:
    """Parse annotation or detection lines: `cut F [conf]` or `grad S E [conf]`; `#` starts a comment."""
    events = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "cut" and len(parts) in (2, 3):
                conf = float(parts[2]) if len(parts) == 3 else 1.0
                events.append(BoundaryEvent.cut(int(parts[1]), conf))
            elif parts[0] == "grad" and len(parts) in (3, 4):
                conf = float(parts[3]) if len(parts) == 4 else 1.0
                events.append(BoundaryEvent.gradual(int(parts[1]), int(parts[2]), conf))
            else:
                raise ValueError(line)
        except ValueError:
            raise MalformedEventFile(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    return sorted(events)


def read_events(path) -> list[BoundaryEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh)


def write_events(events: Iterable[BoundaryEvent], sink: TextIO, with_confidence: bool = True,
                 header: Optional[str] = None) -> None:
    if header:
        for hline in header.splitlines():
            sink.write(f"# {hline}\n")
    for ev in events:
        sink.write(ev.line(with_confidence) + "\n")


# ---------------------------------------------------------------------------
# gradient-boosted tree model


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    weight: float = 0.0
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def evaluate(self, x: np.ndarray) -> float:
        node = self
        while node.left is not None:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.weight

    def evaluate_many(self, X: np.ndarray, out: np.ndarray, rows: Optional[np.ndarray] = None) -> None:
        """Add this tree's leaf weights for the given rows of X into out."""
        if rows is None:
            rows = np.arange(X.shape[0])
        if self.left is None:
            out[rows] += self.weight
            return
        go_left = X[rows, self.feature] < self.threshold
        self.left.evaluate_many(X, out, rows[go_left])
        self.right.evaluate_many(X, out, rows[~go_left])

    def walk(self):
        yield self
        if self.left is not None:
            yield from self.left.walk()
            yield from self.right.walk()

    def to_dict(self) -> dict:
        if self.left is None:
            return {"leaf": self.weight}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "gain": self.gain,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        if "leaf" in d:
            return cls(weight=float(d["leaf"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            gain=float(d.get("gain", 0.0)),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for octet in data:
        h ^= octet
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@lru_cache(maxsize=64)
def schema_hash(schema: tuple[str, ...]) -> str:
    """FNV-1a 64-bit hash of the newline-joined schema names, as 16 hex digits."""
    return f"{fnv1a_64(chr(10).join(schema).encode('utf-8')):016x}"


@dataclass
class GbdtModel:
    trees: list[Node]
    learning_rate: float
    base_score: float
    schema: tuple[str, ...]
    class_tag: str = CUT
    # per-round training log-loss; not serialized
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.schema = tuple(self.schema)
        n = len(self.schema)
        for tree in self.trees:
            for node in tree.walk():
                if not node.is_leaf and not (0 <= node.feature < n):
                    raise SchemaMismatch(f"split on feature {node.feature} but schema has {n} slots")

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.schema)

    def check_schema(self, schema: Sequence[str]) -> None:
        if schema_hash(tuple(schema)) != self.schema_hash:
            raise SchemaMismatch(f"{self.class_tag} model was trained on a different feature schema")

    def raw_score(self, X: np.ndarray, n_trees: Optional[int] = None) -> np.ndarray:
        """Pre-logistic score for each row of X, optionally using only the first n_trees."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        acc = np.zeros(X.shape[0])
        for tree in self.trees[:n_trees]:
            tree.evaluate_many(X, acc)
        return self.base_score + self.learning_rate * acc

    def predict_proba(self, X: np.ndarray, n_trees: Optional[int] = None) -> np.ndarray:
        return logistic(self.raw_score(X, n_trees))

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "class_tag": self.class_tag,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "schema": list(self.schema),
            "schema_hash": self.schema_hash,
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatch(f"unsupported model version {d.get('version')!r}")
        model = cls(
            trees=[Node.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            schema=tuple(d["schema"]),
            class_tag=d.get("class_tag", CUT),
        )
        if d.get("schema_hash", model.schema_hash) != model.schema_hash:
            raise SchemaMismatch("stored schema hash does not match schema names")
        return model

    @classmethod
    def loads(cls, text: str) -> "GbdtModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "GbdtModel":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def logistic(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def gbdt_predict(model: GbdtModel, x: FeatureVector) -> float:
    model.check_schema(x.schema)
    values = np.asarray(x.values, dtype=np.float64)
    total = 0.0
    for tree in model.trees:
        total += tree.evaluate(values)
    return float(logistic(model.base_score + model.learning_rate * total))


# ---------------------------------------------------------------------------
# threshold baselines


def plateau_peaks(track: np.ndarray) -> np.ndarray:
    """Boolean mask of local maxima; a plateau of equal values reports its first frame only."""
    m = np.asarray(track, dtype=np.float64)
    n = len(m)
    peaks = np.zeros(n, dtype=bool)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and m[j + 1] == m[i]:
            j += 1
        rises = i == 0 or m[i - 1] < m[i]
        falls = j == n - 1 or m[j + 1] < m[i]
        if rises and falls:
            peaks[i] = True
        i = j + 1
    return peaks


def threshold_classify(track: Sequence[float], theta: float) -> list[BoundaryEvent]:
    m = np.asarray(track, dtype=np.float64)
    hits = plateau_peaks(m) & (m > theta)
    events = []
    for t in np.flatnonzero(hits):
        conf = 1.0 if theta <= 0 else min(1.0, m[t] / (2.0 * theta))
        events.append(BoundaryEvent.cut(int(t), float(conf)))
    return events


def window_stats(track: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over `window` neighbours of each frame, excluding the frame.

    The window takes window//2 frames before and the rest after, clipped at the ends.
    """
    m = np.asarray(track, dtype=np.float64)
    before = window // 2
    after = window - before
    padded = np.concatenate([np.full(before, np.nan), m, np.full(after, np.nan)])
    views = np.lib.stride_tricks.sliding_window_view(padded, window + 1).copy()
    views[:, before] = np.nan
    with np.errstate(invalid="ignore"):
        mu = np.nanmean(views, axis=1)
        sigma = np.nanstd(views, axis=1)
    return mu, sigma


def adaptive_threshold_classify(track: Sequence[float], window: int = 30, k: float = 3.0,
                                floor: float = 0.05) -> list[BoundaryEvent]:
    m = np.asarray(track, dtype=np.float64)
    if window < 4:
        raise ValueError("adaptive window must be at least 4 frames")
    if window >= len(m):
        raise WindowTooLarge(f"window {window} >= track length {len(m)}")
    mu, sigma = window_stats(m, window)
    level = mu + k * sigma
    # guards against rounding in the window mean on flat tracks
    eps = 1e-12 * np.maximum(1.0, np.abs(mu))
    hits = (m - level > eps) & (m > floor) & plateau_peaks(m)
    events = []
    for t in np.flatnonzero(hits):
        ref = max(level[t], floor)
        conf = 1.0 if ref <= 0 else min(1.0, m[t] / (2.0 * ref))
        events.append(BoundaryEvent.cut(int(t), float(conf)))
    return events


# ---------------------------------------------------------------------------
# model-based arbitration


FeatureInput = Union[FeatureTrack, Sequence[FeatureVector]]


def _as_matrix(features: FeatureInput) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(features, FeatureTrack):
        return tuple(features.schema), features.values
    vectors = list(features)
    if not vectors:
        return (), np.zeros((0, 0))
    schema = tuple(vectors[0].schema)
    for v in vectors:
        if tuple(v.schema) != schema:
            raise SchemaMismatch("feature vectors in one stream carry different schemas")
    return schema, np.array([v.values for v in vectors], dtype=np.float64)


def arbitrate(p_cut: np.ndarray, p_grad: np.ndarray, cut_thresh: float = 0.5,
              grad_thresh: float = 0.5) -> list[BoundaryEvent]:
    """Events from per-frame cut and gradual probabilities."""
    p_cut = np.asarray(p_cut, dtype=np.float64)
    p_grad = np.asarray(p_grad, dtype=np.float64)
    cuts = (p_cut >= cut_thresh) & plateau_peaks(p_cut)
    events = [BoundaryEvent.cut(int(t), float(p_cut[t])) for t in np.flatnonzero(cuts)]
    ridge = (p_grad >= grad_thresh) & ~cuts
    t, n = 0, len(ridge)
    while t < n:
        if not ridge[t]:
            t += 1
            continue
        s = t
        while t + 1 < n and ridge[t + 1]:
            t += 1
        if t > s:
            events.append(BoundaryEvent.gradual(s, t, float(np.mean(p_grad[s:t + 1]))))
        t += 1
    return sorted(events)


def classify_stream(features: FeatureInput, cut_model: GbdtModel, grad_model: GbdtModel,
                    p_cut: float = 0.5, p_grad: float = 0.5) -> list[BoundaryEvent]:
    schema, X = _as_matrix(features)
    if len(X) == 0:
        return []
    cut_model.check_schema(schema)
    grad_model.check_schema(schema)
    return arbitrate(cut_model.predict_proba(X), grad_model.predict_proba(X), p_cut, p_grad)


# ---------------------------------------------------------------------------
# post-filter


def merge_close(events: Sequence[BoundaryEvent], min_gap: int = 10) -> list[BoundaryEvent]:
    """Collapse events whose gap is below min_gap frames, keeping the more confident one."""
    kept: list[BoundaryEvent] = []
    for ev in sorted(events):
        if kept and ev.start - kept[-1].end < min_gap:
            if ev.confidence > kept[-1].confidence:
                kept[-1] = ev
            continue
        kept.append(ev)
    return kept


def is_flash(track: FeatureTrack, t: int, flash_window: int = 3, flash_sim: float = 0.05) -> bool:
    """True when content around frame t returns to what it was before t within flash_window frames.

    Frames t-a and t+b are compared for every a >= 1, b >= 0 with a + b <= flash_window + 1,
    except the boundary pair itself (a=1, b=0). This covers both the jump into a flash
    (t-1 against t+1..t+F) and the jump back out of it (t-2..t-F-1 against t).
    """
    n = len(track)
    for a in range(1, flash_window + 2):
        if t - a < 0:
            break
        for b in range(0, flash_window + 2 - a):
            if (a, b) == (1, 0) or t + b >= n:
                continue
            if track.frame_distance(t - a, t + b) < flash_sim:
                return True
    return False


def postfilter(events: Sequence[BoundaryEvent], features: Optional[FeatureTrack] = None,
               min_gap: int = 10, flash_window: int = 3, flash_sim: float = 0.05) -> list[BoundaryEvent]:
    merged = merge_close(events, min_gap)
    if features is None or features.luma_hists is None or flash_window < 1:
        return merged
    return [
        ev for ev in merged
        if ev.kind != CUT or not is_flash(features, ev.start, flash_window, flash_sim)
    ]
