"""Support sampling, prototype construction and cosine scoring."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import DegenerateInputError, FeatureSequence, Timeline, ValidationError

_EPS = 1e-12


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not n > 0:
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / n


def normalize_rows(x) -> np.ndarray:
    """Row-wise L2 normalization; zero rows raise."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= 0):
        bad = int(np.flatnonzero(norms.ravel() <= 0)[0])
        raise DegenerateInputError(f"row {bad} has zero norm")
    return x / norms


@dataclass
class SupportSet:
    """Normalized support vectors sampled from one session, keyed by label."""

    session_id: str
    shots: int
    seed: int
    vectors: dict[int, np.ndarray] = field(default_factory=dict)
    indices: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def labels(self) -> list[int]:
        return sorted(self.vectors)


def sample_support(gt: Timeline, feats: FeatureSequence, n: int, seed=None) -> SupportSet:
    """Draw up to ``n`` frames per label present in ``gt`` without replacement.

    ``seed`` may be an int or a ``numpy.random.Generator``; labels are visited
    in ascending order so the draw is reproducible.
    """
    if n < 1:
        raise ValidationError("shot count must be >= 1")
    if len(gt) != feats.n_frames:
        raise ValidationError(f"timeline length {len(gt)} != feature frames {feats.n_frames}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = normalize_rows(feats.frames)
    out = SupportSet(feats.session_id, n, seed if isinstance(seed, (int, np.integer)) else -1)
    for lab in np.unique(gt.labels):
        pool = np.flatnonzero(gt.labels == lab)
        take = min(n, pool.size)
        idx = np.sort(rng.choice(pool, size=take, replace=False))
        out.indices[int(lab)] = idx
        out.vectors[int(lab)] = z[idx]
    return out


@dataclass
class PrototypeSet:
    """Unit-norm prototypes per label; ``strategy`` is ``"mean"`` or ``"clustered"``."""

    prototypes: dict[int, np.ndarray]
    strategy: str = "mean"

    @property
    def labels(self) -> list[int]:
        return sorted(self.prototypes)

    @property
    def dim(self) -> int:
        return next(iter(self.prototypes.values())).shape[1]

    def __len__(self):
        return len(self.prototypes)


def mean_prototypes(supports: Iterable[SupportSet], labels: Sequence[int] | None = None) -> PrototypeSet:
    """One prototype per label: normalized mean of per-session normalized centroids.

    Only sessions that contain a label contribute to it, each as a single
    unit direction. Labels supported by no session are omitted.
    """
    per_label: dict[int, list[np.ndarray]] = {}
    for sup in supports:
        for lab, vecs in sup.vectors.items():
            if len(vecs) == 0:
                continue
            centroid = vecs.mean(axis=0)
            per_label.setdefault(lab, []).append(l2_normalize(centroid))
    wanted = set(per_label) if labels is None else set(labels) & set(per_label)
    protos = {}
    for lab in sorted(wanted):
        # sorted stacking keeps the float sum independent of session order
        dirs = np.array(sorted(per_label[lab], key=lambda v: tuple(v)))
        protos[lab] = l2_normalize(dirs.mean(axis=0))[None, :]
    return PrototypeSet(protos, "mean")


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.shape[0])]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        i = rng.choice(x.shape[0], p=d2 / total)
        centers.append(x[i])
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return np.array(centers)


def kmeans(x, k: int, seed=None, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's k-means with k-means++ seeding.

    Uses ``min(k, #distinct points)`` clusters. Stops when assignments no
    longer change; an emptied cluster is re-seeded at the point farthest
    from its current center. Returns ``(centers, assignment)``.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k_eff = min(k, np.unique(x, axis=0).shape[0])
    centers = _kmeans_pp_init(x, k_eff, rng)
    assign = None
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(centers.shape[0]):
            members = x[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
            else:
                far = int(d2[np.arange(x.shape[0]), assign].argmax())
                centers[j] = x[far]
                assign[far] = j
    return centers, assign


def clustered_prototypes(supports: Iterable[SupportSet], k: int = 3, seed=None) -> PrototypeSet:
    """Pool support vectors per label and keep up to ``k`` normalized k-means centroids."""
    pooled: dict[int, list[np.ndarray]] = {}
    for sup in supports:
        for lab, vecs in sup.vectors.items():
            if len(vecs):
                pooled.setdefault(lab, []).append(vecs)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    protos = {}
    for lab in sorted(pooled):
        pts = np.concatenate(pooled[lab])
        # canonical row order: result must not depend on session order
        pts = pts[np.lexsort(pts.T[::-1])]
        centers, _ = kmeans(pts, k, rng)
        protos[lab] = normalize_rows(centers)
    return PrototypeSet(protos, "clustered")


def similarity_scores(feats, protos: PrototypeSet) -> np.ndarray:
    """T x L cosine scores; column order follows ``protos.labels``.

    For labels with several prototypes the best-matching one is used.
    ``feats`` rows must already be unit norm.
    """
    z = feats.frames if isinstance(feats, FeatureSequence) else np.asarray(feats, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError("features must be a T x D matrix")
    if z.shape[1] != protos.dim:
        raise ValidationError(f"feature dim {z.shape[1]} != prototype dim {protos.dim}")
    cols = [np.max(z @ protos.prototypes[lab].T, axis=1) for lab in protos.labels]
    return np.clip(np.column_stack(cols), -1.0, 1.0)
