"""scikit-learn style wrapper around prototype scoring plus Viterbi smoothing."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_sequences, check_xy
from .core import FeatureSequence, ValidationError
from .fewshot import clustered_prototypes, mean_prototypes, normalize_rows, sample_support, similarity_scores
from .hmm import TransitionModel, emission_log_probs, viterbi


class PrototypeHMMSegmenter(BaseEstimator):
    """Few-shot frame labeller.

    ``fit`` takes a list of support sessions (T_j x D feature matrices or
    :class:`FeatureSequence` objects) with their ground-truth timelines,
    samples ``shots`` frames per label per session, builds prototypes and
    estimates the HMM from the support timelines. ``predict`` returns one
    :class:`Timeline` per query sequence.

    Parameters
    ----------
    shots : int
        Support frames sampled per label per session.
    strategy : {"mean", "clustered"}
    n_subcentroids : int
        k for the clustered strategy.
    tau : float
        Emission temperature.
    alpha : float
        Laplace pseudo-count for transitions and priors.
    random_state : int or None
    """

    def __init__(self, shots=10, strategy="mean", n_subcentroids=3, tau=5.0, alpha=1.0, random_state=None):
        self.shots = shots
        self.strategy = strategy
        self.n_subcentroids = n_subcentroids
        self.tau = tau
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y):
        if self.strategy not in ("mean", "clustered"):
            raise ValidationError(f"unknown prototype strategy {self.strategy!r}")
        seqs, timelines = check_xy(X, y)
        rng = np.random.default_rng(self.random_state)
        supports = [sample_support(t, s, self.shots, rng) for s, t in zip(seqs, timelines)]
        return self.fit_supports(supports, timelines, rng)

    def fit_supports(self, supports, timelines, rng=None):
        """Fit from already-sampled :class:`SupportSet` objects.

        ``rng`` seeds k-means for the clustered strategy; it defaults to
        ``random_state``.
        """
        if self.strategy not in ("mean", "clustered"):
            raise ValidationError(f"unknown prototype strategy {self.strategy!r}")
        supports, timelines = list(supports), list(timelines)
        if self.strategy == "mean":
            self.prototypes_ = mean_prototypes(supports)
        else:
            if rng is None:
                rng = np.random.default_rng(self.random_state)
            self.prototypes_ = clustered_prototypes(supports, self.n_subcentroids, rng)
        if len(self.prototypes_) == 0:
            raise ValidationError("support sessions contain no labeled frames")
        self.labels_ = np.array(self.prototypes_.labels, dtype=np.int64)
        self.hmm_ = TransitionModel.fit(timelines, self.labels_.tolist(), self.alpha, self.tau)
        self.n_features_in_ = self.prototypes_.dim
        return self

    def _check_fitted(self):
        if not hasattr(self, "hmm_"):
            raise NotFittedError("PrototypeHMMSegmenter is not fitted yet")

    def decision_function(self, X):
        """T x L cosine scores per sequence (columns follow ``labels_``)."""
        self._check_fitted()
        out = [similarity_scores(normalize_rows(s.frames), self.prototypes_) for s in check_sequences(X)]
        return out[0] if _single(X) else out

    def predict_log_proba(self, X):
        scores = self.decision_function(X)
        if isinstance(scores, np.ndarray):
            return emission_log_probs(scores, self.tau)
        return [emission_log_probs(s, self.tau) for s in scores]

    def predict(self, X):
        self._check_fitted()
        seqs = check_sequences(X)
        out = []
        for s in seqs:
            logB = emission_log_probs(similarity_scores(normalize_rows(s.frames), self.prototypes_), self.tau)
            out.append(viterbi(logB, self.hmm_, s.session_id))
        return out[0] if _single(X) else out


def _single(X) -> bool:
    return isinstance(X, FeatureSequence) or (isinstance(X, np.ndarray) and X.ndim == 2)
