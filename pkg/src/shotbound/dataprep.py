"""Dataset markup tooling: candidate segments from recall-tuned detectors and vote aggregation.

Detector outputs are merged into candidate segments of at most 40 frames, which
observers judge as containing a scene change or not. Votes are aggregated with a
quorum + margin rule; accepted segments become annotation lines.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

from .classify import BoundaryEvent, write_events

SEGMENT_LENGTH = 40

ACCEPTED = "accepted"
REJECTED = "rejected"
NEEDS_MORE = "needs_more"

_YES = {"y", "yes", "1", "true", "t"}
_NO = {"n", "no", "0", "false", "f"}


@dataclass(frozen=True)
class CandidateSegment:
    video_id: str
    center: int
    start: int
    end: int
    sources: tuple[str, ...] = ()

    @property
    def segment_id(self) -> str:
        return f"{self.video_id}:{self.center}"


@dataclass
class VoteRecord:
    segment_id: str
    votes: list[bool] = field(default_factory=list)
    status: str = NEEDS_MORE


def segment_span(center: int, video_length: int, length: int = SEGMENT_LENGTH) -> tuple[int, int]:
    """A `length`-frame window around center, shifted (not shrunk) to fit inside the video."""
    start = center - length // 2
    end = start + length - 1
    if start < 0:
        start, end = 0, length - 1
    if end > video_length - 1:
        end = video_length - 1
        start = max(0, end - length + 1)
    return start, end


def merge_candidates(
    detector_outputs: Sequence[Iterable[int]] | Mapping[str, Iterable[int]],
    video_length: int,
    min_separation: int = SEGMENT_LENGTH,
    video_id: str = "video",
) -> list[CandidateSegment]:
    """Union detector proposals, cluster frames closer than min_separation, one segment per cluster.

    Clusters chain: consecutive sorted proposals less than min_separation apart share
    a cluster. The segment center is the cluster median (lower middle for even sizes,
    averaged and floored).
    """
    if isinstance(detector_outputs, Mapping):
        named = list(detector_outputs.items())
    else:
        named = [(f"detector{i}", frames) for i, frames in enumerate(detector_outputs)]
    proposals: list[tuple[int, str]] = []
    for name, frames in named:
        proposals.extend((int(f), name) for f in frames)
    proposals.sort()
    clusters: list[list[tuple[int, str]]] = []
    for item in proposals:
        if clusters and item[0] - clusters[-1][-1][0] < min_separation:
            clusters[-1].append(item)
        else:
            clusters.append([item])
    segments = []
    for cluster in clusters:
        frames = [f for f, _ in cluster]
        mid = len(frames) // 2
        center = frames[mid] if len(frames) % 2 else (frames[mid - 1] + frames[mid]) // 2
        center = min(max(center, 0), video_length - 1)
        start, end = segment_span(center, video_length)
        sources = tuple(sorted({name for _, name in cluster}))
        segments.append(CandidateSegment(video_id, center, start, end, sources))
    return segments


def aggregate_votes(votes: Sequence[bool], min_votes: int = 5, margin: int = 2) -> str:
    yes = sum(1 for v in votes if v)
    no = len(votes) - yes
    if len(votes) >= min_votes:
        if yes - no >= margin:
            return ACCEPTED
        if no - yes >= margin:
            return REJECTED
    return NEEDS_MORE


def parse_judgment(text: str) -> bool:
    t = text.strip().lower()
    if t in _YES:
        return True
    if t in _NO:
        return False
    raise ValueError(f"unrecognised judgment {text!r}")


def read_votes(source: TextIO) -> dict[str, VoteRecord]:
    """Read `segment_id,judgment` CSV rows (a header row is optional)."""
    records: dict[str, VoteRecord] = {}
    for row in csv.reader(source):
        if not row or row[0].startswith("#"):
            continue
        if row[0].strip() == "segment_id":
            continue
        seg, judgment = row[0].strip(), row[1]
        records.setdefault(seg, VoteRecord(seg)).votes.append(parse_judgment(judgment))
    return records


def tally(records: Mapping[str, VoteRecord], min_votes: int = 5, margin: int = 2) -> dict[str, VoteRecord]:
    for rec in records.values():
        rec.status = aggregate_votes(rec.votes, min_votes, margin)
    return dict(records)


def write_manifest(segments: Iterable[CandidateSegment], sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["segment_id", "video_id", "start", "end"])
    for seg in segments:
        writer.writerow([seg.segment_id, seg.video_id, seg.start, seg.end])


def read_manifest(source: TextIO) -> list[CandidateSegment]:
    segments = []
    for row in csv.DictReader(source):
        seg_id = row["segment_id"]
        center = int(seg_id.rsplit(":", 1)[1]) if ":" in seg_id else int(row["start"])
        segments.append(CandidateSegment(row["video_id"], center, int(row["start"]), int(row["end"])))
    return segments


def read_detector_output(path) -> list[int]:
    """One frame ordinal per line; blank lines and `#` comments ignored."""
    frames = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                frames.append(int(line))
    return frames


def finalize_annotations(
    accepted: Iterable[CandidateSegment],
    sink: TextIO,
    positions: Optional[Mapping[str, BoundaryEvent]] = None,
) -> list[BoundaryEvent]:
    """Write accepted segments as annotation lines, sorted and deduplicated.

    `positions` may map a segment id to its exact event (e.g. a gradual span);
    otherwise the segment's candidate frame is written as a cut.
    """
    positions = positions or {}
    events = set()
    for seg in accepted:
        ev = positions.get(seg.segment_id) or BoundaryEvent.cut(seg.center)
        events.add((ev.start, ev.end, ev.kind))
    result = [BoundaryEvent(s, e, k) for s, e, k in sorted(events)]
    write_events(result, sink, with_confidence=False, header="shot boundary annotations")
    return result


def group_by_video(segments: Iterable[CandidateSegment]) -> dict[str, list[CandidateSegment]]:
    out: dict[str, list[CandidateSegment]] = defaultdict(list)
    for seg in segments:
        out[seg.video_id].append(seg)
    return dict(out)
