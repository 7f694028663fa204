"""Event-level precision/recall/F1 against ground truth, plus throughput."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

from .classify import CUT, GRADUAL, BoundaryEvent
from .errors import UnsortedInput, ZeroElapsed


@dataclass
class Matching:
    pairs: list[tuple[int, int]]  # (gt index, pred index)
    gt: list[BoundaryEvent]
    pred: list[BoundaryEvent]

    @property
    def kind_mismatches(self) -> int:
        return sum(self.gt[g].kind != self.pred[p].kind for g, p in self.pairs)


def _check_sorted(events: Sequence[BoundaryEvent], what: str) -> None:
    for a, b in zip(events, events[1:]):
        if (b.start, b.end) < (a.start, a.end):
            raise UnsortedInput(f"{what} events are not sorted by frame")


def _distance(gt: BoundaryEvent, pred: BoundaryEvent) -> int:
    """Frames between the two events' spans (0 when they intersect)."""
    return max(0, gt.start - pred.end, pred.start - gt.end)


def _compatible(gt: BoundaryEvent, pred: BoundaryEvent, tol: int) -> bool:
    if gt.kind == CUT and pred.kind == CUT:
        return abs(gt.start - pred.start) <= tol
    # either side is a span: intersect after widening the gradual side(s) by tol
    return _distance(gt, pred) <= tol


def match_events(gt: Sequence[BoundaryEvent], pred: Sequence[BoundaryEvent], tol: int = 2) -> Matching:
    """One-to-one greedy matching, predictions taken in increasing frame order.

    Each prediction takes the closest compatible unmatched ground-truth event
    (earliest on ties). A cut matches a cut within `tol` frames; anything matches a
    gradual span it intersects once the span is widened by `tol` on both sides.
    """
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    gt = list(gt)
    pred = list(pred)
    _check_sorted(gt, "ground-truth")
    _check_sorted(pred, "predicted")
    taken = [False] * len(gt)
    pairs = []
    lo = 0
    for pi, p in enumerate(pred):
        while lo < len(gt) and gt[lo].end + tol < p.start:
            lo += 1
        best, best_d = None, None
        gi = lo
        while gi < len(gt) and gt[gi].start - tol <= p.end:
            if not taken[gi] and _compatible(gt[gi], p, tol):
                d = _distance(gt[gi], p)
                if best is None or d < best_d:
                    best, best_d = gi, d
            gi += 1
        if best is not None:
            taken[best] = True
            pairs.append((best, pi))
    return Matching(pairs, gt, pred)


@dataclass
class Counts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return 1.0 if denom == 0 else self.true_positives / denom

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return 1.0 if denom == 0 else self.true_positives / denom

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )

    def as_dict(self) -> dict:
        return {**asdict(self), "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    overall: Counts = field(default_factory=Counts)
    cut: Counts = field(default_factory=Counts)
    gradual: Counts = field(default_factory=Counts)
    kind_mismatches: int = 0
    frames: int = 0
    elapsed: float = 0.0
    method: str = "proposed"

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    @property
    def fps(self) -> Optional[float]:
        if self.elapsed <= 0:
            return None
        return throughput(self.frames, self.elapsed)

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(
            self.overall + other.overall,
            self.cut + other.cut,
            self.gradual + other.gradual,
            self.kind_mismatches + other.kind_mismatches,
            self.frames + other.frames,
            self.elapsed + other.elapsed,
            self.method,
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "overall": self.overall.as_dict(),
            "cut": self.cut.as_dict(),
            "gradual": self.gradual.as_dict(),
            "kind_mismatches": self.kind_mismatches,
            "frames": self.frames,
            "elapsed": self.elapsed,
            "fps": self.fps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def score(matching: Matching) -> EvalReport:
    gt, pred = matching.gt, matching.pred
    tp = len(matching.pairs)
    report = EvalReport(overall=Counts(tp, len(pred) - tp, len(gt) - tp))
    report.kind_mismatches = matching.kind_mismatches
    same_kind = [(g, p) for g, p in matching.pairs if gt[g].kind == pred[p].kind]
    for kind in (CUT, GRADUAL):
        tp_k = sum(1 for g, _ in same_kind if gt[g].kind == kind)
        n_gt = sum(1 for e in gt if e.kind == kind)
        n_pred = sum(1 for e in pred if e.kind == kind)
        setattr(report, kind, Counts(tp_k, n_pred - tp_k, n_gt - tp_k))
    return report


def evaluate(gt: Sequence[BoundaryEvent], pred: Sequence[BoundaryEvent], tol: int = 2) -> EvalReport:
    return score(match_events(sorted(gt), sorted(pred), tol))


def throughput(frame_count: int, elapsed: float) -> float:
    """Frames per second."""
    if frame_count == 0:
        return 0.0
    if elapsed <= 0:
        raise ZeroElapsed("elapsed time must be positive")
    return frame_count / elapsed


def format_table(reports: Iterable[EvalReport]) -> str:
    """Plain-text table: Method, Speed (FPS), F score, Precision, Recall."""
    header = ("Method", "Speed (FPS)", "F score", "Precision", "Recall")
    rows = []
    for r in reports:
        fps = r.fps
        rows.append((
            r.method,
            "-" if fps is None else f"{fps:.0f}",
            f"{r.f1:.4f}",
            f"{r.precision:.4f}",
            f"{r.recall:.4f}",
        ))
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
