"""Labeled dataset assembly and gradient-boosted tree training.

Trees are grown with exact greedy split search on second-order logistic-loss
statistics (gradient p - y, hessian p(1 - p)) with an L2 penalty on leaf weights.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classify import CUT, GRADUAL, BoundaryEvent, GbdtModel, Node, classify_stream, logistic, postfilter
from .errors import AnnotationOutOfRange, DegenerateData, EmptyAnnotation, TooFewGroups
from .evaluate import EvalReport, evaluate
from .metrics import FeatureTrack, FeatureVector

logger = logging.getLogger(__name__)

NONE = "none"
LABELS = (NONE, CUT, GRADUAL)


@dataclass(frozen=True)
class TrainParams:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    l2_lambda: float = 1.0
    negative_ratio: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_trees, max_depth and min_samples_leaf must be >= 1")
        if self.learning_rate <= 0 or self.l2_lambda < 0 or self.negative_ratio <= 0:
            raise ValueError("learning_rate and negative_ratio must be positive, l2_lambda >= 0")


@dataclass
class LabeledVideo:
    """Feature track of one stream with its ground-truth events."""

    video_id: str
    track: FeatureTrack
    events: list[BoundaryEvent]

    def __len__(self) -> int:
        return len(self.track)


@dataclass(frozen=True)
class LabeledSample:
    x: FeatureVector
    label: str
    video_id: str
    frame: int


@dataclass
class Dataset:
    """Columnar labeled samples; indexing yields LabeledSample values."""

    schema: tuple[str, ...]
    X: np.ndarray
    labels: np.ndarray  # strings from LABELS
    video_ids: np.ndarray
    frames: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(
            FeatureVector(self.X[i], self.schema, int(self.frames[i])),
            str(self.labels[i]),
            str(self.video_ids[i]),
            int(self.frames[i]),
        )

    def target(self, target_class: str) -> np.ndarray:
        return (self.labels == target_class).astype(np.float64)


def frame_labels(events: Sequence[BoundaryEvent], n_frames: int) -> np.ndarray:
    """Per-frame label array; a cut overrides a gradual span covering the same frame."""
    labels = np.full(n_frames, NONE, dtype=object)
    for ev in events:
        if ev.start < 0 or ev.end >= n_frames:
            raise AnnotationOutOfRange(
                f"{ev.kind} [{ev.start}, {ev.end}] outside a {n_frames}-frame stream"
            )
        if ev.kind == GRADUAL:
            labels[ev.start:ev.end + 1] = GRADUAL
    for ev in events:
        if ev.kind == CUT:
            labels[ev.start] = CUT
    return labels


def assemble_dataset(videos: Sequence[LabeledVideo], params: TrainParams = TrainParams()) -> Dataset:
    """Label every frame and subsample negatives per video at params.negative_ratio : 1.

    Positives are never dropped. A video without positives contributes
    negative_ratio negatives so event-free footage is still represented.
    """
    rng = np.random.default_rng(params.seed)
    blocks_x, blocks_y, blocks_v, blocks_f = [], [], [], []
    schema = None
    total_pos = 0
    for video in videos:
        if schema is None:
            schema = tuple(video.track.schema)
        elif tuple(video.track.schema) != schema:
            raise ValueError(f"video {video.video_id} has a different feature schema")
        labels = frame_labels(video.events, len(video))
        pos = np.flatnonzero(labels != NONE)
        neg = np.flatnonzero(labels == NONE)
        total_pos += len(pos)
        keep = int(round(params.negative_ratio * max(len(pos), 1)))
        if keep < len(neg):
            neg = np.sort(rng.choice(neg, size=keep, replace=False))
        rows = np.sort(np.concatenate([pos, neg]))
        blocks_x.append(video.track.values[rows])
        blocks_y.append(labels[rows])
        blocks_v.append(np.full(len(rows), video.video_id, dtype=object))
        blocks_f.append(rows)
    if schema is None:
        raise EmptyAnnotation("no videos given")
    if total_pos == 0:
        raise EmptyAnnotation("annotations contain no events")
    return Dataset(
        schema,
        np.concatenate(blocks_x).astype(np.float64),
        np.concatenate(blocks_y),
        np.concatenate(blocks_v),
        np.concatenate(blocks_f),
    )


# ---------------------------------------------------------------------------
# boosting


def log_loss(y: np.ndarray, score: np.ndarray) -> float:
    """Mean logistic loss for labels y in {0, 1} and raw scores."""
    # log(1 + exp(-s)) for y=1, log(1 + exp(s)) for y=0, evaluated stably
    z = np.where(y > 0.5, -score, score)
    return float(np.mean(np.logaddexp(0.0, z)))


def split_gain(GL, HL, GR, HR, lam):
    G = GL + GR
    H = HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam))


def _midpoint(a: float, b: float) -> float:
    mid = a + (b - a) / 2.0
    # adjacent floats: the midpoint may round onto a, which would send a to the right
    return mid if a < mid else b


class _TreeGrower:
    def __init__(self, X: np.ndarray, params: TrainParams):
        self.X = X
        self.XT = np.ascontiguousarray(X.T)
        self.order = np.argsort(X, axis=0, kind="stable").T.copy()
        self.params = params
        self.n, self.d = X.shape

    def best_split(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray, G: float, H: float):
        """(gain, feature, threshold) of the best valid split, or None."""
        p = self.params
        m = len(rows)
        if m < 2 * p.min_samples_leaf:
            return None
        in_node = np.zeros(self.n, dtype=bool)
        in_node[rows] = True
        node_order = self.order[in_node[self.order]].reshape(self.d, m)
        xs = np.take_along_axis(self.XT, node_order, axis=1)
        GL = np.cumsum(g[node_order], axis=1)[:, :-1]
        HL = np.cumsum(h[node_order], axis=1)[:, :-1]
        gain = split_gain(GL, HL, G - GL, H - HL, p.l2_lambda)
        left_n = np.arange(1, m)
        ok = (xs[:, :-1] < xs[:, 1:]) & (left_n >= p.min_samples_leaf) & (m - left_n >= p.min_samples_leaf)
        gain = np.where(ok, gain, -np.inf)
        per_feature = gain.argmax(axis=1)
        best = gain[np.arange(self.d), per_feature]
        f = int(best.argmax())
        if not best[f] > 0.0:
            return None
        i = int(per_feature[f])
        return float(best[f]), f, _midpoint(float(xs[f, i]), float(xs[f, i + 1]))

    def grow(self, g: np.ndarray, h: np.ndarray, delta: np.ndarray) -> Node:
        """Grow one tree; writes each training row's leaf weight into delta."""
        return self._grow(np.arange(self.n), g, h, delta, 0)

    def _grow(self, rows, g, h, delta, depth) -> Node:
        p = self.params
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        split = None
        if depth < p.max_depth:
            split = self.best_split(rows, g, h, G, H)
        if split is None:
            w = -G / (H + p.l2_lambda)
            delta[rows] = w
            return Node(weight=w)
        gain, f, thr = split
        go_left = self.X[rows, f] < thr
        return Node(
            feature=f,
            threshold=thr,
            gain=gain,
            left=self._grow(rows[go_left], g, h, delta, depth + 1),
            right=self._grow(rows[~go_left], g, h, delta, depth + 1),
        )


def fit_gbdt(X: np.ndarray, y: np.ndarray, schema: Sequence[str], params: TrainParams = TrainParams(),
             class_tag: str = CUT) -> GbdtModel:
    """Binary logistic boosting on a feature matrix and 0/1 targets."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateData(f"{class_tag} model needs both classes (pos={n_pos}, neg={n_neg})")
    base = math.log(n_pos / n_neg)
    grower = _TreeGrower(X, params)
    scores = np.full(len(y), base)
    history = [log_loss(y, scores)]
    trees: list[Node] = []
    delta = np.empty(len(y))
    for m in range(params.n_trees):
        p = logistic(scores)
        g = p - y
        h = p * (1.0 - p)
        tree = grower.grow(g, h, delta)
        if tree.is_leaf:
            if m == 0:
                logger.warning("no valid split at the root; %s model keeps the base rate only", class_tag)
            break
        trees.append(tree)
        scores = scores + params.learning_rate * delta
        history.append(log_loss(y, scores))
    model = GbdtModel(trees, params.learning_rate, base, tuple(schema), class_tag)
    model.history = history
    return model


def train_gbdt(samples: Dataset, target_class: str, params: TrainParams = TrainParams()) -> GbdtModel:
    return fit_gbdt(samples.X, samples.target(target_class), samples.schema, params, target_class)


def train_models(videos: Sequence[LabeledVideo], params: TrainParams = TrainParams()):
    """Cut and gradual one-vs-rest models from annotated videos."""
    data = assemble_dataset(videos, params)
    return train_gbdt(data, CUT, params), train_gbdt(data, GRADUAL, params)


def importance_vector(model: GbdtModel) -> np.ndarray:
    """Total split gain per feature index."""
    gains = np.zeros(len(model.schema))
    for tree in model.trees:
        for node in tree.walk():
            if not node.is_leaf:
                gains[node.feature] += node.gain
    return gains


def feature_importance(model: GbdtModel, include_zero: bool = False) -> list[tuple[str, float]]:
    """Features ranked by total split gain, highest first."""
    gains = importance_vector(model)
    ranked = sorted(range(len(gains)), key=lambda j: (-gains[j], j))
    return [(model.schema[j], float(gains[j])) for j in ranked if include_zero or gains[j] > 0]


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class DetectParams:
    p_cut: float = 0.5
    p_grad: float = 0.5
    min_gap: int = 10
    flash_window: int = 3
    flash_sim: float = 0.05
    tol: int = 2


@dataclass
class CVResult:
    folds: list[list[str]]
    reports: list[EvalReport]
    f1: list[float] = field(default_factory=list)

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.f1)) if self.f1 else 0.0


def detect_events(track: FeatureTrack, cut_model: GbdtModel, grad_model: GbdtModel,
                  detect: DetectParams = DetectParams()) -> list[BoundaryEvent]:
    events = classify_stream(track, cut_model, grad_model, detect.p_cut, detect.p_grad)
    return postfilter(events, track, detect.min_gap, detect.flash_window, detect.flash_sim)


def group_folds(video_ids: Sequence[str], k: int, seed: int = 0) -> list[list[str]]:
    ids = sorted(set(video_ids))
    if k < 2:
        raise ValueError("cross-validation needs k >= 2")
    if len(ids) < k:
        raise TooFewGroups(f"{len(ids)} videos cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    return [sorted(shuffled[i::k]) for i in range(k)]


def cross_validate(videos: Sequence[LabeledVideo], params: TrainParams = TrainParams(), k: int = 5,
                   detect: DetectParams = DetectParams()) -> CVResult:
    """Grouped k-fold CV: each video is held out exactly once, never split across roles."""
    folds = group_folds([v.video_id for v in videos], k, params.seed)
    result = CVResult(folds, [])
    for held_out in folds:
        held = set(held_out)
        train_set = [v for v in videos if v.video_id not in held]
        test_set = [v for v in videos if v.video_id in held]
        cut_model, grad_model = train_models(train_set, params)
        report = EvalReport()
        for video in test_set:
            pred = detect_events(video.track, cut_model, grad_model, detect)
            report = report + evaluate(video.events, pred, detect.tol)
        result.reports.append(report)
        result.f1.append(report.f1)
    return result
