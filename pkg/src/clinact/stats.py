"""Rank and product-moment correlation, partial rank correlation, median split."""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats as _st

from .core import ValidationError


class UndefinedCorrelationError(ValidationError):
    """Correlation undefined (constant input or too few samples)."""


class RankDeficiencyError(ValidationError):
    pass


@dataclass(frozen=True)
class CorrelationResult:
    statistic: float
    p_value: float
    n: int

    @property
    def rho(self) -> float:
        return self.statistic


def rankdata(x) -> np.ndarray:
    """Average ranks (1-based) with ties sharing the mean rank."""
    return _st.rankdata(np.asarray(x, dtype=np.float64), method="average")


def _prep(x, y, min_n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"x and y must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < min_n:
        raise UndefinedCorrelationError(f"need at least {min_n} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("inputs must be finite")
    return x, y


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx <= 0 or syy <= 0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def t_pvalue(r: float, df: int) -> float:
    """Two-sided p for ``t = r * sqrt(df / (1 - r^2))`` on ``df`` degrees of freedom."""
    if df < 1:
        raise UndefinedCorrelationError("no degrees of freedom left")
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt(df / (1.0 - r * r))
    return float(min(1.0, 2.0 * _st.t.sf(abs(t), df)))


def pearson(x, y) -> CorrelationResult:
    x, y = _prep(x, y)
    r = _pearson_r(x, y)
    return CorrelationResult(r, t_pvalue(r, x.size - 2), x.size)


def spearman(x, y) -> CorrelationResult:
    x, y = _prep(x, y)
    r = _pearson_r(rankdata(x), rankdata(y))
    return CorrelationResult(r, t_pvalue(r, x.size - 2), x.size)


def permutation_pvalue(x, y, n_resamples: int = 10_000, seed=None, method: str = "spearman") -> float:
    """Two-sided permutation p-value: share of shuffles with ``|r| >= |r_obs|``."""
    x, y = _prep(x, y)
    if method == "spearman":
        x, y = rankdata(x), rankdata(y)
    elif method != "pearson":
        raise ValidationError(f"unknown method {method!r}")
    observed = abs(_pearson_r(x, y))
    rng = np.random.default_rng(seed)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx @ dx) * (dy @ dy))
    perms = rng.permuted(np.tile(dy, (n_resamples, 1)), axis=1)
    r = np.abs(perms @ dx) / denom
    hits = np.count_nonzero(r >= observed - 1e-12)
    return float((hits + 1) / (n_resamples + 1))


def partial_spearman(x, y, controls: Sequence = ()) -> CorrelationResult:
    """Rank correlation of ``x`` and ``y`` after regressing out the ranked controls.

    Degrees of freedom for the p-value are ``n - 2 - len(controls)``.
    """
    controls = list(controls)
    if not controls:
        return spearman(x, y)
    x, y = _prep(x, y)
    n, k = x.size, len(controls)
    if n <= k + 2:
        raise UndefinedCorrelationError(f"n={n} too small for {k} controls")
    cols = [np.ones(n)]
    for c in controls:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (n,):
            raise ValidationError("every control must have the same length as x")
        cols.append(rankdata(c))
    design = np.column_stack(cols)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficiencyError("control design matrix is rank deficient")
    rx, ry = rankdata(x), rankdata(y)
    beta, *_ = np.linalg.lstsq(design, np.column_stack([rx, ry]), rcond=None)
    resid = np.column_stack([rx, ry]) - design @ beta
    r = _pearson_r(resid[:, 0], resid[:, 1])
    return CorrelationResult(r, t_pvalue(r, n - 2 - k), n)


@dataclass
class GroupComparison:
    split_value: float
    higher: dict[str, tuple[float, float]] = field(default_factory=dict)
    lower: dict[str, tuple[float, float]] = field(default_factory=dict)
    n_higher: int = 0
    n_lower: int = 0
    higher_ids: list = field(default_factory=list)
    lower_ids: list = field(default_factory=list)


def _mean_std(v: np.ndarray) -> tuple[float, float]:
    if v.size == 0:
        return (float("nan"), float("nan"))
    # exact rational arithmetic: identical values give exactly zero spread
    vals = v.tolist()
    return (float(statistics.mean(vals)), float(statistics.pstdev(vals)))


def median_split(scores, metrics: Mapping[str, Sequence[float]], ids: Optional[Sequence] = None) -> GroupComparison:
    """Split sessions at the median score; ties with the median go to the higher group.

    ``metrics`` maps a name to per-session values aligned with ``scores``; the
    score itself is reported under ``"competency"``.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise ValidationError("median split needs at least two sessions")
    ids = list(range(s.size)) if ids is None else list(ids)
    split = float(np.median(s))
    hi = s >= split
    out = GroupComparison(split, n_higher=int(hi.sum()), n_lower=int((~hi).sum()))
    out.higher_ids = [i for i, h in zip(ids, hi) if h]
    out.lower_ids = [i for i, h in zip(ids, hi) if not h]
    table = {"competency": s, **{k: np.asarray(v, dtype=np.float64) for k, v in metrics.items()}}
    for name, v in table.items():
        if v.shape != s.shape:
            raise ValidationError(f"metric {name!r} has {v.size} values, expected {s.size}")
        out.higher[name] = _mean_std(v[hi])
        out.lower[name] = _mean_std(v[~hi])
    return out
