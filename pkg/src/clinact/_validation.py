"""Input coercion helpers used by the estimator API."""
from __future__ import annotations

import numpy as np

from .core import FeatureSequence, Timeline, ValidationError


def check_sequence(x, name: str = "X") -> FeatureSequence:
    if isinstance(x, FeatureSequence):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a T x D array, got shape {arr.shape}")
    return FeatureSequence("", arr)


def check_sequences(X, name: str = "X") -> list[FeatureSequence]:
    """Accept one sequence or a list of them; always returns a list."""
    if isinstance(X, FeatureSequence) or (isinstance(X, np.ndarray) and X.ndim == 2):
        return [check_sequence(X, name)]
    seqs = [check_sequence(x, f"{name}[{i}]") for i, x in enumerate(X)]
    if not seqs:
        raise ValidationError(f"{name}: no sequences given")
    dims = {s.dim for s in seqs}
    if len(dims) > 1:
        raise ValidationError(f"{name}: inconsistent feature dimensions {sorted(dims)}")
    return seqs


def check_timeline(y, n_frames: int, name: str = "y") -> Timeline:
    t = y if isinstance(y, Timeline) else Timeline("", np.asarray(y))
    if len(t) != n_frames:
        raise ValidationError(f"{name}: length {len(t)} != {n_frames} frames")
    return t


def check_xy(X, y) -> tuple[list[FeatureSequence], list[Timeline]]:
    seqs = check_sequences(X)
    if isinstance(y, Timeline) or (isinstance(y, np.ndarray) and y.ndim == 1 and len(seqs) == 1):
        y = [y]
    y = list(y)
    if len(y) != len(seqs):
        raise ValidationError(f"got {len(seqs)} sequences but {len(y)} timelines")
    return seqs, [check_timeline(t, s.n_frames, f"y[{i}]") for i, (t, s) in enumerate(zip(y, seqs))]
