"""Transition/prior estimation, temperature-scaled emissions and Viterbi decoding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import NUM_LABELS, Timeline, ValidationError

LOG_FLOOR = 1e-300


def _label_index(labels: Sequence[int]) -> dict[int, int]:
    labels = list(labels)
    if not labels:
        raise ValidationError("label set must be non-empty")
    if len(set(labels)) != len(labels):
        raise ValidationError("label set contains duplicates")
    if min(labels) < 0 or max(labels) >= NUM_LABELS:
        raise ValidationError(f"labels must lie in 0..{NUM_LABELS - 1}")
    return {lab: i for i, lab in enumerate(labels)}


def _as_array(t) -> np.ndarray:
    return t.labels if isinstance(t, Timeline) else np.asarray(t, dtype=np.int64)


def estimate_transitions(timelines: Iterable, labels: Sequence[int], alpha: float = 1.0) -> np.ndarray:
    """Laplace-smoothed frame-to-frame transition matrix over ``labels``.

    Pairs where either frame falls outside the label set are ignored.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    index = _label_index(labels)
    L = len(index)
    counts = np.zeros((L, L))
    lut = np.full(NUM_LABELS, -1, dtype=np.int64)
    for lab, i in index.items():
        lut[lab] = i
    for t in timelines:
        y = _as_array(t)
        if y.size < 2:
            continue
        a, b = lut[y[:-1]], lut[y[1:]]
        ok = (a >= 0) & (b >= 0)
        np.add.at(counts, (a[ok], b[ok]), 1)
    return (counts + alpha) / (counts.sum(axis=1, keepdims=True) + alpha * L)


def estimate_priors(timelines: Iterable, labels: Sequence[int], alpha: float = 1.0) -> np.ndarray:
    """Laplace-smoothed distribution of each timeline's first-frame label."""
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    index = _label_index(labels)
    counts = np.zeros(len(index))
    for t in timelines:
        y = _as_array(t)
        if y.size and int(y[0]) in index:
            counts[index[int(y[0])]] += 1
    return (counts + alpha) / (counts.sum() + alpha * len(index))


def emission_log_probs(scores, tau: float = 5.0) -> np.ndarray:
    """Row-wise log-softmax of ``tau * scores``."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    if tau <= 0:
        raise ValidationError("tau must be positive")
    z = tau * s
    return z - logsumexp(z, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TransitionModel:
    labels: tuple[int, ...]
    logA: np.ndarray
    logPi: np.ndarray
    alpha: float = 1.0
    tau: float = 5.0

    def __post_init__(self):
        L = len(self.labels)
        if self.logA.shape != (L, L) or self.logPi.shape != (L,):
            raise ValidationError("transition/prior shapes do not match the label set")
        if self.alpha <= 0 or self.tau <= 0:
            raise ValidationError("alpha and tau must be positive")

    @classmethod
    def fit(cls, timelines, labels: Sequence[int], alpha: float = 1.0, tau: float = 5.0) -> "TransitionModel":
        timelines = list(timelines)
        A = estimate_transitions(timelines, labels, alpha)
        pi = estimate_priors(timelines, labels, alpha)
        return cls(
            tuple(int(x) for x in labels),
            np.log(np.maximum(A, LOG_FLOOR)),
            np.log(np.maximum(pi, LOG_FLOOR)),
            alpha,
            tau,
        )


def path_log_score(path_idx, logB, logA, logPi) -> float:
    """Joint log-score of a path given as column indices."""
    p = np.asarray(path_idx)
    logB = np.asarray(logB)
    s = logPi[p[0]] + logB[np.arange(p.size), p].sum()
    if p.size > 1:
        s += logA[p[:-1], p[1:]].sum()
    return float(s)


def viterbi_indices(logB, logA, logPi) -> tuple[np.ndarray, float]:
    """Best path as column indices plus its log-score.

    Ties go to the lowest index (``argmax`` returns the first maximum).
    """
    logB = np.asarray(logB, dtype=np.float64)
    T, L = logB.shape
    if T < 1:
        raise ValidationError("need at least one frame to decode")
    back = np.empty((T, L), dtype=np.int64)
    delta = logPi + logB[0]
    for t in range(1, T):
        cand = delta[:, None] + logA  # cand[i, j]: from i into j
        back[t] = cand.argmax(axis=0)
        delta = cand[back[t], np.arange(L)] + logB[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(delta.argmax())
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def viterbi(logB, model: TransitionModel, session_id: str = "") -> Timeline:
    """Decode a T x L emission matrix whose columns follow ``model.labels``."""
    logB = np.asarray(logB)
    if logB.ndim != 2 or logB.shape[1] != len(model.labels):
        raise ValidationError(f"emission matrix needs {len(model.labels)} columns")
    idx, _ = viterbi_indices(logB, model.logA, model.logPi)
    return Timeline(session_id, np.asarray(model.labels, dtype=np.int64)[idx])
