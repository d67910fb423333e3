"""Run-length segment extraction and simple sequence-level features."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import BACKGROUND, NUM_CLASSES, SCREEN_LABELS, Segment, Timeline, ValidationError


def _labels(t) -> np.ndarray:
    return t.labels if isinstance(t, Timeline) else np.asarray(t, dtype=np.int64)


def runs(t) -> list[Segment]:
    """All maximal constant runs, background included, no filtering."""
    y = _labels(t)
    if y.size == 0:
        return []
    change = np.flatnonzero(np.diff(y)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [y.size]))
    return [Segment(int(y[s]), int(s), int(e - s)) for s, e in zip(starts, ends)]


def decode_runs(segs: Sequence[Segment]) -> np.ndarray:
    """Inverse of :func:`runs` for an unfiltered run list."""
    if not segs:
        return np.zeros(0, dtype=np.int64)
    return np.repeat([s.label for s in segs], [s.duration for s in segs]).astype(np.int64)


def run_length_encode(t, min_frames: int = 25) -> list[Segment]:
    """Clinical segments: runs shorter than ``min_frames`` are dropped, then background.

    Equal-label neighbours left after dropping are kept separate.
    """
    if min_frames < 1:
        raise ValidationError("min_frames must be >= 1")
    return [s for s in runs(t) if s.duration >= min_frames and s.label != BACKGROUND]


@dataclass
class TransitionCounts:
    counts: np.ndarray  # 16 x 16, row/col k-1 for action k
    total_segments: int

    def count(self, a: int, b: int) -> int:
        return int(self.counts[a - 1, b - 1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def transitions(segs: Sequence[Segment]) -> TransitionCounts:
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for a, b in zip(segs, segs[1:]):
        if a.label == BACKGROUND or b.label == BACKGROUND:
            raise ValidationError("segment list still contains background")
        counts[a.label - 1, b.label - 1] += 1
    return TransitionCounts(counts, len(segs))


@dataclass(frozen=True)
class SequenceFeatures:
    transition_count: int
    unique_action_count: int
    screen_time_ratio: float


def sequence_features(segs: Sequence[Segment], t) -> SequenceFeatures:
    y = _labels(t)
    labelled = y != BACKGROUND
    n = int(labelled.sum())
    screen = int(np.isin(y, list(SCREEN_LABELS)).sum())
    return SequenceFeatures(
        transition_count=max(0, len(segs) - 1),
        unique_action_count=len({s.label for s in segs}),
        screen_time_ratio=screen / n if n else 0.0,
    )


def write_segments(path, segs: Iterable[Segment]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "start_frame", "duration_frames"])
        for s in segs:
            w.writerow([s.label, s.start, s.duration])


def read_segments(path) -> list[Segment]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["label", "start_frame", "duration_frames"]:
            raise ValidationError(f"{path}: header must be 'label,start_frame,duration_frames'")
        return [Segment(int(a), int(b), int(c)) for a, b, c in reader]
