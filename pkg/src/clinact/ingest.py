"""Readers and writers for feature sequences, annotations and rubric scores.

Binary feature layout (little-endian)::

    b"FSEQ" | u32 version=1 | u32 T | u32 D | T*D float32, row-major
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import (
    BACKGROUND,
    NUM_CLASSES,
    NUM_RUBRIC_ITEMS,
    CompetencyRecord,
    FeatureSequence,
    ParseError,
    Segment,
    Timeline,
    ValidationError,
)

MAGIC = b"FSEQ"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

FEATURE_SUFFIX = ".fseq"
ANNOTATION_SUFFIX = ".csv"
COMPETENCY_HEADER = ["session_id"] + [f"item_{k}" for k in range(1, NUM_RUBRIC_ITEMS + 1)]


def encode_features(frames: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError("frames must be a T x D matrix")
    t, d = arr.shape
    return _HEADER.pack(MAGIC, VERSION, t, d) + arr.tobytes(order="C")


def decode_features(data: bytes, session_id: str = "", fps: float = 25.0) -> FeatureSequence:
    if len(data) < _HEADER.size:
        raise ParseError(f"header truncated at byte offset {len(data)}: need {_HEADER.size} bytes")
    magic, version, t, d = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise ParseError(f"unsupported version {version} at byte offset 4")
    if t < 1 or d < 1:
        raise ParseError(f"declared shape T={t}, D={d} at byte offset 8 must be positive")
    expected = t * d * 4
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise ParseError(
            f"payload at byte offset {_HEADER.size}: expected {expected} bytes for T={t}, D={d}, got {actual}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(t, d)
    bad = np.flatnonzero(~np.isfinite(arr.ravel()))
    if bad.size:
        raise ParseError(f"non-finite value at byte offset {_HEADER.size + 4 * int(bad[0])}")
    return FeatureSequence(session_id, arr.astype(np.float64), fps)


def write_features(path, frames) -> None:
    if isinstance(frames, FeatureSequence):
        frames = frames.frames
    Path(path).write_bytes(encode_features(frames))


def _read_features_csv(path: Path, session_id: str, fps: float) -> FeatureSequence:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "frame":
            raise ParseError(f"{path}: header must start with 'frame'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                frame_idx = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if frame_idx != len(rows):
                raise ParseError(f"{path}:{lineno}: frame index {frame_idx} out of sequence")
            if not all(np.isfinite(vals)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows or len(header) < 2:
        raise ParseError(f"{path}: no feature rows")
    return FeatureSequence(session_id, np.array(rows, dtype=np.float64), fps)


def read_features(path, session_id: Optional[str] = None, fps: float = 25.0) -> FeatureSequence:
    """Load raw (unnormalized) per-frame features from a binary or CSV file."""
    path = Path(path)
    sid = session_id if session_id is not None else path.stem
    if path.suffix.lower() == ".csv":
        return _read_features_csv(path, sid, fps)
    return decode_features(path.read_bytes(), sid, fps)


def read_annotations(path, num_frames: int, session_id: Optional[str] = None) -> Timeline:
    """Expand half-open ``start_frame,end_frame,action_id`` intervals into a timeline.

    Frames not covered by any interval are background.
    """
    path = Path(path)
    labels = np.full(num_frames, BACKGROUND, dtype=np.int64)
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is not None and [h.strip() for h in header] != ["start_frame", "end_frame", "action_id"]:
        raise ParseError(f"{path}: header must be 'start_frame,end_frame,action_id'")
    taken = np.zeros(num_frames, dtype=bool)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            start, end, action = (int(x) for x in row)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected three integers, got {row!r}") from None
        if not 1 <= action <= NUM_CLASSES:
            raise ValidationError(f"{path}:{lineno}: action_id {action} outside 1..{NUM_CLASSES}")
        if end <= start:
            raise ValidationError(f"{path}:{lineno}: end_frame {end} <= start_frame {start}")
        if start < 0 or end > num_frames:
            raise ValidationError(f"{path}:{lineno}: interval [{start},{end}) outside 0..{num_frames}")
        if taken[start:end].any():
            raise ValidationError(f"{path}:{lineno}: interval [{start},{end}) overlaps an earlier row")
        taken[start:end] = True
        labels[start:end] = action
    return Timeline(session_id if session_id is not None else path.stem, labels)


def timeline_intervals(labels) -> list[Segment]:
    """Maximal non-background runs of a label vector, unfiltered."""
    labels = np.asarray(labels)
    out = []
    if labels.size == 0:
        return out
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [labels.size]))
    for s, e in zip(starts, ends):
        if labels[s] != BACKGROUND:
            out.append(Segment(int(labels[s]), int(s), int(e - s)))
    return out


def write_annotations(path, timeline) -> None:
    labels = timeline.labels if isinstance(timeline, Timeline) else timeline
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_frame", "end_frame", "action_id"])
        for seg in timeline_intervals(labels):
            w.writerow([seg.start, seg.end, seg.label])


def _parse_score(cell: str, where: str) -> Optional[float]:
    cell = cell.strip()
    if not cell:
        return None
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{where}: score {cell!r} is not a number") from None
    if not 1 <= v <= 5:
        raise ValidationError(f"{where}: score {cell} outside 1..5")
    return int(v) if v.is_integer() else v


def read_competency(path) -> list[CompetencyRecord]:
    path = Path(path)
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COMPETENCY_HEADER:
            raise ParseError(f"{path}: header must be 'session_id,item_1,...,item_{NUM_RUBRIC_ITEMS}'")
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COMPETENCY_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(COMPETENCY_HEADER)} columns, got {len(row)}")
            sid = row[0].strip()
            if sid in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate session_id {sid!r}")
            seen.add(sid)
            items = tuple(
                _parse_score(c, f"{path}:{lineno} item_{k}") for k, c in enumerate(row[1:], start=1)
            )
            rec = CompetencyRecord(sid, items)
            rec.video_observable_pct  # surfaces NoObservableItemsError at load time
            out.append(rec)
    return out


def _format_score(v) -> str:
    if v is None:
        return ""
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_competency(path, records: Iterable[CompetencyRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPETENCY_HEADER)
        for rec in records:
            w.writerow([rec.session_id] + [_format_score(v) for v in rec.items])


@dataclass
class Session:
    features: FeatureSequence
    truth: Timeline
    competency: Optional[CompetencyRecord] = None

    @property
    def session_id(self) -> str:
        return self.features.session_id


@dataclass
class Dataset:
    sessions: list[Session] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.session_id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise ValidationError("session ids must be unique")
        for s in self.sessions:
            if len(s.truth) != s.features.n_frames:
                raise ValidationError(
                    f"{s.session_id}: timeline length {len(s.truth)} != feature frames {s.features.n_frames}"
                )

    def __len__(self):
        return len(self.sessions)

    def __iter__(self):
        return iter(self.sessions)

    @property
    def session_ids(self) -> list[str]:
        return [s.session_id for s in self.sessions]

    def records(self) -> dict[str, CompetencyRecord]:
        return {s.session_id: s.competency for s in self.sessions if s.competency is not None}


def load_dataset(features_dir, annotations_dir, competency_csv=None, fps: float = 25.0) -> Dataset:
    """Pair every ``<id>.fseq`` (or ``<id>.csv``) feature file with ``<id>.csv`` annotations."""
    features_dir, annotations_dir = Path(features_dir), Path(annotations_dir)
    feat_paths = sorted(p for p in features_dir.iterdir() if p.suffix.lower() in (FEATURE_SUFFIX, ".csv"))
    if not feat_paths:
        raise ValidationError(f"no feature files in {features_dir}")
    records = {}
    if competency_csv is not None:
        records = {r.session_id: r for r in read_competency(competency_csv)}
    sessions = []
    for fp in feat_paths:
        feats = read_features(fp, fp.stem, fps)
        ann = annotations_dir / f"{fp.stem}{ANNOTATION_SUFFIX}"
        if not ann.exists():
            raise FileNotFoundError(f"missing annotations for session {fp.stem}: {ann}")
        truth = read_annotations(ann, feats.n_frames, fp.stem)
        sessions.append(Session(feats, truth, records.get(fp.stem)))
    return Dataset(sessions)


def save_dataset(dataset: Dataset, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    fdir, adir = out_dir / "features", out_dir / "annotations"
    fdir.mkdir(parents=True, exist_ok=True)
    adir.mkdir(parents=True, exist_ok=True)
    for s in dataset:
        write_features(fdir / f"{s.session_id}{FEATURE_SUFFIX}", s.features.frames)
        write_annotations(adir / f"{s.session_id}{ANNOTATION_SUFFIX}", s.truth)
    paths = {"features": fdir, "annotations": adir}
    recs = [s.competency for s in dataset if s.competency is not None]
    if recs:
        paths["competency"] = out_dir / "competency.csv"
        write_competency(paths["competency"], recs)
    return paths
