"""Synthetic cohorts in which more competent sessions are harder to recognise.

Competency ``q`` in [0, 100] drives two knobs per session: feature noise
``sigma(q) = sigma0 + sigma1 * q / 100`` and workflow diversity
``eps(q) = eps0 + eps1 * q / 100`` (mixing weight of a uniform transition
matrix into the protocol matrix). Background gaps are inserted with a
per-session probability drawn independently of ``q``, so annotation coverage
is unrelated to competency.

Every session draws from its own generator seeded by ``(seed, session index)``
through :class:`numpy.random.SeedSequence`; cohort-wide quantities (class
directions) use ``(seed, 2**32 - 1)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import (
    BACKGROUND,
    NUM_CLASSES,
    NUM_RUBRIC_ITEMS,
    VIDEO_OBSERVABLE_FLAGS,
    CompetencyRecord,
    FeatureSequence,
    Timeline,
    ValidationError,
)
from .ingest import Dataset, Session

_COHORT_STREAM = 2**32 - 1


def protocol_matrix(n_classes: int, follow: float = 0.8) -> np.ndarray:
    """Row-stochastic matrix favouring the next class in a fixed cyclic order."""
    if n_classes < 2:
        return np.ones((1, 1))
    A = np.full((n_classes, n_classes), (1 - follow) / (n_classes - 2) if n_classes > 2 else 0.0)
    np.fill_diagonal(A, 0.0)
    for k in range(n_classes):
        A[k, (k + 1) % n_classes] = follow if n_classes > 2 else 1.0
    return A


@dataclass
class SynthConfig:
    n_sessions: int = 22
    n_classes: int = 16
    feat_dim: int = 64
    frames_min: int = 2500
    frames_max: int = 3500
    sigma0: float = 0.3
    sigma1: float = 0.6
    eps0: float = 0.05
    eps1: float = 0.4
    mean_segment_len: float = 60.0
    background_min: float = 0.2
    background_max: float = 0.6
    missing_item_rate: float = 0.1
    fps: float = 25.0
    seed: int = 0
    base_matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_sessions < 1:
            raise ValidationError("n_sessions must be >= 1")
        if not 1 <= self.n_classes <= NUM_CLASSES:
            raise ValidationError(f"n_classes must be in 1..{NUM_CLASSES}")
        if self.feat_dim < 1:
            raise ValidationError("feat_dim must be >= 1")
        if not 1 <= self.frames_min <= self.frames_max:
            raise ValidationError("need 1 <= frames_min <= frames_max")
        if self.sigma0 < 0 or self.sigma1 < 0:
            raise ValidationError("sigma0 and sigma1 must be non-negative")
        if not (0 <= self.eps0 <= 1 and 0 <= self.eps0 + self.eps1 <= 1 and self.eps1 >= 0):
            raise ValidationError("need eps0 and eps0 + eps1 in [0, 1]")
        if self.mean_segment_len < 1:
            raise ValidationError("mean_segment_len must be >= 1")
        if not 0 <= self.background_min <= self.background_max < 1:
            raise ValidationError("need 0 <= background_min <= background_max < 1")
        if not 0 <= self.missing_item_rate < 1:
            raise ValidationError("missing_item_rate must be in [0, 1)")
        if self.base_matrix is None:
            self.base_matrix = protocol_matrix(self.n_classes)
        else:
            A = np.asarray(self.base_matrix, dtype=np.float64)
            if A.shape != (self.n_classes, self.n_classes) or np.any(A < 0):
                raise ValidationError("base_matrix must be a non-negative n_classes x n_classes matrix")
            if not np.allclose(A.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                raise ValidationError("base_matrix rows must sum to 1")
            self.base_matrix = A

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base_matrix"] = np.asarray(self.base_matrix).tolist()
        return d


def class_directions(cfg: SynthConfig) -> np.ndarray:
    """Unit base direction per label id 0..n_classes (row 0 is background)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _COHORT_STREAM]))
    v = rng.standard_normal((cfg.n_classes + 1, cfg.feat_dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _geometric_len(rng: np.random.Generator, mean: float) -> int:
    return int(rng.geometric(1.0 / mean))


def sample_timeline(rng: np.random.Generator, cfg: SynthConfig, eps: float, bg_prob: float, n_frames: int) -> np.ndarray:
    K = cfg.n_classes
    A = (1 - eps) * cfg.base_matrix + eps * np.full((K, K), 1.0 / K)
    labels = np.empty(n_frames, dtype=np.int64)
    pos = 0
    k = int(rng.integers(K))
    while pos < n_frames:
        if rng.random() < bg_prob:
            n = _geometric_len(rng, cfg.mean_segment_len)
            labels[pos:pos + n] = BACKGROUND
            pos += n
            if pos >= n_frames:
                break
        n = _geometric_len(rng, cfg.mean_segment_len)
        labels[pos:pos + n] = k + 1
        pos += n
        k = int(rng.choice(K, p=A[k]))
    return labels


def _items_for(q: float, rng: np.random.Generator, missing_rate: float) -> tuple:
    score = 1.0 + 4.0 * q / 100.0
    items = []
    for flag in VIDEO_OBSERVABLE_FLAGS:
        if flag:
            items.append(score)
        elif rng.random() < missing_rate:
            items.append(None)
        else:
            items.append(int(rng.integers(1, 6)))
    assert len(items) == NUM_RUBRIC_ITEMS
    return tuple(items)


@dataclass
class SessionTruth:
    """Generative parameters of one synthetic session."""

    session_id: str
    competency: float
    sigma: float
    eps: float
    background_prob: float


def generate_cohort(cfg: SynthConfig, with_truth: bool = False):
    """Build a :class:`Dataset` with features, ground truth and rubric records.

    All observable rubric items of session ``i`` are set to
    ``1 + 4 * q_i / 100``, so its competency percentage is ``20 + 0.8 * q_i``.
    """
    dirs = class_directions(cfg)
    sessions, truths = [], []
    for i in range(cfg.n_sessions):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        sid = f"S{i + 1:02d}"
        q = float(rng.uniform(0.0, 100.0))
        sigma = cfg.sigma0 + cfg.sigma1 * q / 100.0
        eps = cfg.eps0 + cfg.eps1 * q / 100.0
        bg_prob = float(rng.uniform(cfg.background_min, cfg.background_max))
        n_frames = int(rng.integers(cfg.frames_min, cfg.frames_max + 1))
        labels = sample_timeline(rng, cfg, eps, bg_prob, n_frames)
        x = dirs[labels] + sigma * rng.standard_normal((n_frames, cfg.feat_dim))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = x / np.where(norms > 0, norms, 1.0)
        # float32 rounding here keeps in-memory and on-disk cohorts identical
        x = x.astype(np.float32).astype(np.float64)
        rec = CompetencyRecord(sid, _items_for(q, rng, cfg.missing_item_rate))
        sessions.append(Session(FeatureSequence(sid, x, cfg.fps), Timeline(sid, labels), rec))
        truths.append(SessionTruth(sid, q, sigma, eps, bg_prob))
    ds = Dataset(sessions)
    return (ds, truths) if with_truth else ds
