"""Evaluation protocols: within-session, leave-one-session-out, and competency analyses."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    BACKGROUND,
    NUM_RUBRIC_ITEMS,
    RUBRIC_ITEMS,
    CompetencyRecord,
    EmptyEvaluationError,
    Timeline,
    ValidationError,
)
from .estimator import PrototypeHMMSegmenter
from .fewshot import sample_support
from .ingest import Dataset, Session
from .metrics import RecognitionReport, miou, mof, segmental_f1
from .sequence import run_length_encode
from .stats import (
    UndefinedCorrelationError,
    partial_spearman,
    pearson,
    spearman,
)

DEFAULT_F1_THRESHOLDS = (0.1, 0.25, 0.5)


@dataclass
class EvalConfig:
    shots: int = 10
    strategy: str = "mean"
    n_subcentroids: int = 3
    tau: float = 5.0
    alpha: float = 1.0
    min_frames: int = 25
    f1_thresholds: tuple = DEFAULT_F1_THRESHOLDS
    f1_threshold: float = 0.5
    include_background: bool = False
    seed: int = 0
    replicates: Optional[int] = None  # None: 5 within-session, 1 leave-one-out

    def __post_init__(self):
        if self.shots < 1:
            raise ValidationError("shots must be >= 1")
        if self.strategy not in ("mean", "clustered"):
            raise ValidationError(f"unknown prototype strategy {self.strategy!r}")
        if self.replicates is not None and self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if self.tau <= 0 or self.alpha <= 0:
            raise ValidationError("tau and alpha must be positive")
        self.f1_thresholds = tuple(float(t) for t in self.f1_thresholds)

    def estimator_params(self) -> dict:
        return dict(
            shots=self.shots,
            strategy=self.strategy,
            n_subcentroids=self.n_subcentroids,
            tau=self.tau,
            alpha=self.alpha,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["f1_thresholds"] = list(self.f1_thresholds)
        return d


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass
class SessionResult:
    """One evaluated session: the report at the default F1 threshold plus extras."""

    report: RecognitionReport
    f1_at: dict[float, float]
    prediction: Optional[Timeline] = None
    unreachable: list[int] = field(default_factory=list)


def score_prediction(pred: Timeline, gt: Timeline, cfg: EvalConfig, query_mask=None) -> SessionResult:
    """Metrics for one decoded session.

    ``query_mask`` restricts MOF/mIoU to a subset of frames (the within-session
    query set). Segmental F1 always compares full, unfiltered timelines.
    """
    p, g = pred.labels, gt.labels
    if query_mask is not None:
        p, g = p[query_mask], g[query_mask]
    m = mof(p, g, cfg.include_background)
    iou = miou(p, g, cfg.include_background)
    evaluated = int(g.size if cfg.include_background else np.count_nonzero(g != BACKGROUND))
    classes = np.unique(g)
    n_classes = int(classes.size if cfg.include_background else np.count_nonzero(classes != BACKGROUND))
    pseg = run_length_encode(pred, 1)
    gseg = run_length_encode(gt, 1)
    thresholds = sorted(set(cfg.f1_thresholds) | {cfg.f1_threshold})
    f1_at = {t: segmental_f1(pseg, gseg, t) for t in thresholds}
    rep = RecognitionReport(gt.session_id, m, iou, f1_at[cfg.f1_threshold], evaluated, n_classes)
    return SessionResult(rep, f1_at, pred)


@dataclass
class AggregateResult:
    session_id: str
    mean: RecognitionReport
    std: dict[str, float]
    replicates: list[SessionResult]


def _aggregate(session_id: str, results: Sequence[SessionResult]) -> AggregateResult:
    vals = {k: np.array([getattr(r.report, k) for r in results], dtype=np.float64)
            for k in ("mof", "miou", "f1", "evaluated_frames", "gt_classes")}
    mean = RecognitionReport(
        session_id,
        float(vals["mof"].mean()),
        float(vals["miou"].mean()),
        float(vals["f1"].mean()),
        int(round(vals["evaluated_frames"].mean())),
        int(round(vals["gt_classes"].mean())),
    )
    std = {k: float(vals[k].std(ddof=0)) for k in ("mof", "miou", "f1")}
    return AggregateResult(session_id, mean, std, list(results))


def within_sample_eval(session: Session, cfg: EvalConfig, session_index: int = 0) -> AggregateResult:
    """Support and query drawn from the same session.

    Each replicate samples ``cfg.shots`` frames per label, builds prototypes
    from them and the HMM from the session's own ground truth, decodes the
    whole session and scores the labelled frames that were not used as support.
    """
    reps = cfg.replicates or 5
    gt = session.truth
    results = []
    for r in range(reps):
        rng = _rng(cfg.seed, session_index, r)
        sup = sample_support(gt, session.features, cfg.shots, rng)
        est = PrototypeHMMSegmenter(**cfg.estimator_params()).fit_supports([sup], [gt], rng)
        pred = est.predict(session.features)
        mask = np.ones(len(gt), dtype=bool)
        for idx in sup.indices.values():
            mask[idx] = False
        if not cfg.include_background:
            mask &= gt.labels != BACKGROUND
        if not mask.any():
            raise EmptyEvaluationError(f"{session.session_id}: every labelled frame was used as support")
        results.append(score_prediction(pred, gt, cfg, mask))
    return _aggregate(session.session_id, results)


@dataclass
class CrossSampleResult:
    sessions: list[AggregateResult]

    @property
    def reports(self) -> list[RecognitionReport]:
        return [s.mean for s in self.sessions]

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for k in ("mof", "miou", "f1"):
            v = np.array([getattr(r, k) for r in self.reports])
            out[k] = (float(v.mean()), float(v.std(ddof=0)))
        return out


def cross_sample_eval(dataset: Dataset, cfg: EvalConfig) -> CrossSampleResult:
    """Leave-one-session-out evaluation.

    Fold ``i`` samples support frames from every other session, fits
    prototypes and the HMM on them and decodes session ``i``. Labels present
    only in the held-out session cannot be predicted; they are listed in
    ``unreachable`` on the fold's results.
    """
    if len(dataset) < 2:
        raise ValidationError("leave-one-out needs at least two sessions")
    reps = cfg.replicates or 1
    out = []
    for i, held in enumerate(dataset.sessions):
        support = [s for j, s in enumerate(dataset.sessions) if j != i]
        results = []
        for r in range(reps):
            rng = _rng(cfg.seed, i, r)
            sups = [sample_support(s.truth, s.features, cfg.shots, rng) for s in support]
            est = PrototypeHMMSegmenter(**cfg.estimator_params())
            est.fit_supports(sups, [s.truth for s in support], rng)
            pred = est.predict(held.features)
            res = score_prediction(pred, held.truth, cfg)
            present = set(np.unique(held.truth.labels).tolist())
            res.unreachable = sorted(present - set(est.labels_.tolist()))
            results.append(res)
        out.append(_aggregate(held.session_id, results))
    return CrossSampleResult(out)


# ---------------------------------------------------------------- competency


@dataclass
class AssociationRow:
    feature: str
    rho: float = math.nan
    p: float = math.nan
    pearson_r: float = math.nan
    n: int = 0
    status: str = "ok"


@dataclass
class ConfoundRow:
    control: str
    partial_rho: float = math.nan
    p: float = math.nan
    var_mof_rho: float = math.nan
    var_mof_p: float = math.nan
    n: int = 0
    status: str = "ok"


@dataclass
class ConfoundSet:
    """Per-session annotation statistics that could confound the association."""

    session_ids: list[str]
    coverage: np.ndarray
    segment_count: np.ndarray
    unique_actions: np.ndarray
    avg_segment_duration: np.ndarray
    video_duration: np.ndarray
    total_annotations: np.ndarray

    COLUMNS = (
        ("coverage", "Annotation coverage"),
        ("segment_count", "# GT action segments"),
        ("unique_actions", "# Unique GT action types"),
        ("avg_segment_duration", "Avg segment duration"),
        ("video_duration", "Video duration"),
        ("total_annotations", "# All annotations"),
    )

    def column(self, name: str, ids: Sequence[str]) -> np.ndarray:
        pos = {s: i for i, s in enumerate(self.session_ids)}
        return np.asarray(getattr(self, name), dtype=np.float64)[[pos[s] for s in ids]]


def compute_confounds(dataset: Dataset) -> ConfoundSet:
    """Annotation statistics from ground truth (action layer only)."""
    cols = {k: [] for k, _ in ConfoundSet.COLUMNS}
    for s in dataset:
        y = s.truth.labels
        fps = s.features.fps
        segs = run_length_encode(s.truth, 1)
        cols["coverage"].append(np.count_nonzero(y != BACKGROUND) / y.size if y.size else 0.0)
        cols["segment_count"].append(len(segs))
        cols["unique_actions"].append(len({g.label for g in segs}))
        cols["avg_segment_duration"].append(float(np.mean([g.duration for g in segs])) / fps if segs else 0.0)
        cols["video_duration"].append(y.size / fps)
        cols["total_annotations"].append(len(segs))
    return ConfoundSet(dataset.session_ids, **{k: np.asarray(v, dtype=np.float64) for k, v in cols.items()})


def _paired(reports: Iterable[RecognitionReport], records: Mapping[str, CompetencyRecord] | Iterable[CompetencyRecord]):
    if not isinstance(records, Mapping):
        records = {r.session_id: r for r in records}
    rows = [(r, records[r.session_id]) for r in reports if r.session_id in records]
    return rows


def _corr_row(name: str, x, y) -> AssociationRow:
    row = AssociationRow(name, n=len(x))
    try:
        s = spearman(x, y)
        row.rho, row.p = s.statistic, s.p_value
    except UndefinedCorrelationError as exc:
        row.status = f"undefined: {exc}"
        return row
    try:
        row.pearson_r = pearson(x, y).statistic
    except UndefinedCorrelationError:
        pass
    return row


def competency_analysis(reports: Sequence[RecognitionReport], records, confounds: Optional[ConfoundSet] = None):
    """Association of per-session metrics with the competency percentage.

    Returns ``(rows, confound_rows)``; ``confound_rows`` is empty unless
    ``confounds`` is given. Failing rows carry a status instead of raising.
    """
    pairs = _paired(reports, records)
    if len(pairs) < 3:
        raise ValidationError(f"need at least 3 sessions with both a report and a record, got {len(pairs)}")
    ids = [r.session_id for r, _ in pairs]
    comp = np.array([rec.video_observable_pct for _, rec in pairs])
    mof_v = np.array([r.mof for r, _ in pairs])
    table = [
        ("mIoU", np.array([r.miou for r, _ in pairs])),
        ("MOF", mof_v),
        ("F1", np.array([r.f1 for r, _ in pairs])),
        ("1-MOF", 1.0 - mof_v),
        ("# Action classes in GT", np.array([r.gt_classes for r, _ in pairs], dtype=float)),
        ("# Labeled query frames", np.array([r.evaluated_frames for r, _ in pairs], dtype=float)),
    ]
    rows = [_corr_row(name, v, comp) for name, v in table]
    crow: list[ConfoundRow] = []
    if confounds is not None:
        base = ConfoundRow("None (baseline)", n=len(ids))
        try:
            s = spearman(mof_v, comp)
            base.partial_rho, base.p = s.statistic, s.p_value
        except UndefinedCorrelationError as exc:
            base.status = f"undefined: {exc}"
        crow.append(base)
        for attr, label in ConfoundSet.COLUMNS:
            c = confounds.column(attr, ids)
            row = ConfoundRow(label, n=len(ids))
            try:
                pr = partial_spearman(mof_v, comp, [c])
                row.partial_rho, row.p = pr.statistic, pr.p_value
            except ValidationError as exc:
                row.status = f"partial undefined: {exc}"
            try:
                vm = spearman(c, mof_v)
                row.var_mof_rho, row.var_mof_p = vm.statistic, vm.p_value
            except ValidationError as exc:
                row.status = f"{row.status}; var-MOF undefined: {exc}" if row.status != "ok" else f"var-MOF undefined: {exc}"
            crow.append(row)
    return rows, crow


def per_item_analysis(reports: Sequence[RecognitionReport], records) -> list[AssociationRow]:
    """Spearman of MOF against each rubric item, pairwise-deleting unrated items.

    Rows are ordered by descending ``|rho|``; rows without a defined
    correlation come last in item order.
    """
    pairs = _paired(reports, records)
    if len(pairs) < 3:
        raise ValidationError(f"need at least 3 sessions with both a report and a record, got {len(pairs)}")
    rows = []
    for k in range(1, NUM_RUBRIC_ITEMS + 1):
        name = f"item_{k} {RUBRIC_ITEMS[k - 1]}"
        xs = [(r.mof, rec.item(k)) for r, rec in pairs if rec.item(k) is not None]
        if len(xs) < 3:
            rows.append(AssociationRow(name, n=len(xs), status="insufficient-data"))
            continue
        m, s = zip(*xs)
        row = AssociationRow(name, n=len(xs))
        try:
            sp = spearman(m, s)
            row.rho, row.p = sp.statistic, sp.p_value
            row.pearson_r = pearson(m, s).statistic
        except UndefinedCorrelationError as exc:
            row.status = f"undefined: {exc}"
        rows.append(row)
    ok = sorted((r for r in rows if r.status == "ok"), key=lambda r: -abs(r.rho))
    return ok + [r for r in rows if r.status != "ok"]


# ---------------------------------------------------------------- CSV output


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path, rows: Sequence) -> None:
    """Write a list of dataclass rows with their field names as header."""
    rows = list(rows)
    if not rows:
        raise ValidationError("nothing to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(asdict(rows[0])))
        for r in rows:
            w.writerow([_fmt(v) for v in asdict(r).values()])


def write_confounds(path, cs: ConfoundSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id"] + [k for k, _ in ConfoundSet.COLUMNS])
        for i, sid in enumerate(cs.session_ids):
            w.writerow([sid] + [_fmt(float(getattr(cs, k)[i])) for k, _ in ConfoundSet.COLUMNS])


def read_confounds(path) -> ConfoundSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["session_id"] + [k for k, _ in ConfoundSet.COLUMNS]
        if reader.fieldnames != expected:
            raise ValidationError(f"{path}: header must be {','.join(expected)}")
        rows = list(reader)
    return ConfoundSet(
        [r["session_id"] for r in rows],
        **{k: np.array([float(r[k]) for r in rows]) for k, _ in ConfoundSet.COLUMNS},
    )


def write_details(path, result: CrossSampleResult, thresholds: Sequence[float]) -> None:
    """Per-session F1 at every threshold, std over replicates and unreachable labels."""
    thresholds = sorted(thresholds)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id"] + [f"f1@{t:g}" for t in thresholds] + ["mof_std", "miou_std", "f1_std", "unreachable"])
        for agg in result.sessions:
            f1s = [float(np.mean([r.f1_at[t] for r in agg.replicates])) for t in thresholds]
            unreachable = sorted({u for r in agg.replicates for u in r.unreachable})
            w.writerow(
                [agg.session_id]
                + [_fmt(v) for v in f1s]
                + [_fmt(agg.std["mof"]), _fmt(agg.std["miou"]), _fmt(agg.std["f1"])]
                + [" ".join(str(u) for u in unreachable)]
            )
