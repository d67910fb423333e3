"""Frame/segment recognition metrics and inter-rater agreement."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .core import BACKGROUND, EmptyEvaluationError, Segment, Timeline, ValidationError


def _labels(t) -> np.ndarray:
    return t.labels if isinstance(t, Timeline) else np.asarray(t, dtype=np.int64)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ValidationError(f"length mismatch: pred {p.size} vs gt {g.size}")
    return p, g


def mof(pred, gt, include_background: bool = False) -> float:
    """Fraction of evaluated frames labelled correctly."""
    p, g = _pair(pred, gt)
    mask = np.ones(g.size, bool) if include_background else g != BACKGROUND
    n = int(mask.sum())
    if n == 0:
        raise EmptyEvaluationError("no frames to evaluate")
    return float(np.count_nonzero(p[mask] == g[mask]) / n)


def per_class_iou(pred, gt, include_background: bool = False) -> dict[int, float]:
    """IoU for every class present in ``gt``."""
    p, g = _pair(pred, gt)
    out = {}
    for c in np.unique(g):
        c = int(c)
        if c == BACKGROUND and not include_background:
            continue
        inter = np.count_nonzero((p == c) & (g == c))
        union = np.count_nonzero((p == c) | (g == c))
        out[c] = inter / union
    return out


def miou(pred, gt, include_background: bool = False) -> float:
    ious = per_class_iou(pred, gt, include_background)
    if not ious:
        raise EmptyEvaluationError("no ground-truth classes to evaluate")
    return float(sum(ious.values()) / len(ious))


def segment_iou(a: Segment, b: Segment) -> float:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = max(a.end, b.end) - min(a.start, b.start) if inter else a.duration + b.duration
    return inter / union


def segment_matches(pred_segs: Sequence[Segment], gt_segs: Sequence[Segment], iou_threshold: float = 0.5):
    """Greedy one-to-one matches as ``(pred_idx, gt_idx, iou)`` triples.

    Candidate pairs share a label and reach the threshold; they are taken in
    order of descending IoU, then earlier gt start.
    """
    cands = []
    for i, ps in enumerate(pred_segs):
        for j, gs in enumerate(gt_segs):
            if ps.label != gs.label:
                continue
            iou = segment_iou(ps, gs)
            if iou >= iou_threshold and iou > 0:
                cands.append((-iou, gs.start, ps.start, i, j))
    cands.sort()
    used_p, used_g, out = set(), set(), []
    for neg_iou, _, _, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, -neg_iou))
    return out


def segmental_f1(pred_segs: Sequence[Segment], gt_segs: Sequence[Segment], iou_threshold: float = 0.5) -> float:
    pred_segs, gt_segs = list(pred_segs), list(gt_segs)
    if not pred_segs and not gt_segs:
        return 1.0
    if not pred_segs or not gt_segs:
        return 0.0
    tp = len(segment_matches(pred_segs, gt_segs, iou_threshold))
    fp = len(pred_segs) - tp
    fn = len(gt_segs) - tp
    return 2 * tp / (2 * tp + fp + fn)


def cohens_kappa(t1, t2, hz: float = 1.0, fps: float = 25.0) -> float:
    """Frame-level Cohen's kappa on samples where at least one rater labelled.

    Both timelines are subsampled every ``round(fps / hz)`` frames first.
    """
    a, b = _pair(t1, t2)
    if hz <= 0 or fps < hz:
        raise ValidationError("need 0 < hz <= fps")
    step = max(1, int(round(fps / hz)))
    a, b = a[::step], b[::step]
    keep = (a != BACKGROUND) | (b != BACKGROUND)
    a, b = a[keep], b[keep]
    n = a.size
    if n == 0:
        raise EmptyEvaluationError("no samples where either rater placed a label")
    p_o = np.count_nonzero(a == b) / n
    cats = np.union1d(a, b)
    p_e = sum((np.count_nonzero(a == c) / n) * (np.count_nonzero(b == c) / n) for c in cats)
    if np.isclose(p_e, 1.0, rtol=0, atol=1e-15):
        return 1.0
    return float((p_o - p_e) / (1 - p_e))


def label_set_jaccard(t1, t2) -> float:
    a, b = _pair(t1, t2)
    sa = set(np.unique(a).tolist()) - {BACKGROUND}
    sb = set(np.unique(b).tolist()) - {BACKGROUND}
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass(frozen=True)
class RecognitionReport:
    session_id: str
    mof: float
    miou: float
    f1: float
    evaluated_frames: int
    gt_classes: int


REPORT_FIELDS = [f.name for f in fields(RecognitionReport)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_reports(path, reports: Iterable[RecognitionReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in reports:
            w.writerow([_fmt(v) for v in asdict(r).values()])


def read_reports(path) -> list[RecognitionReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_FIELDS:
            raise ValidationError(f"{path}: header must be {','.join(REPORT_FIELDS)}")
        return [
            RecognitionReport(
                r["session_id"],
                float(r["mof"]),
                float(r["miou"]),
                float(r["f1"]),
                int(r["evaluated_frames"]),
                int(r["gt_classes"]),
            )
            for r in reader
        ]
