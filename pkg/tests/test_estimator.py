import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from clinact import PrototypeHMMSegmenter
from clinact.core import FeatureSequence, Timeline, ValidationError


def _toy(seed=0, T=60):
    rng = np.random.default_rng(seed)
    dirs = np.eye(4)
    y = np.repeat(rng.integers(0, 4, T // 10), 10)
    return dirs[y] + 0.05 * rng.standard_normal((y.size, 4)), y


def test_params_round_trip_and_clone():
    est = PrototypeHMMSegmenter(shots=3, strategy="clustered", tau=2.0, random_state=1)
    params = est.get_params()
    assert params == dict(shots=3, strategy="clustered", n_subcentroids=3, tau=2.0, alpha=1.0, random_state=1)
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(shots=7)
    assert est.shots == 7


def test_unfitted_raises():
    X, _ = _toy()
    with pytest.raises(NotFittedError):
        PrototypeHMMSegmenter().predict(X)


def test_fit_predict_shapes_and_accuracy():
    (X1, y1), (X2, y2) = _toy(0), _toy(1)
    est = PrototypeHMMSegmenter(shots=5, random_state=0).fit([X1], [y1])
    pred = est.predict(X2)
    assert isinstance(pred, Timeline) and len(pred) == len(y2)
    assert np.mean(pred.labels == y2) > 0.9
    assert isinstance(est.predict([X2, X1]), list)
    assert est.decision_function(X2).shape == (len(y2), len(est.labels_))
    np.testing.assert_allclose(np.exp(est.predict_log_proba(X2)).sum(axis=1), 1, atol=1e-9)
    assert est.n_features_in_ == 4


def test_fit_is_reproducible_with_random_state():
    X, y = _toy(2)
    a = PrototypeHMMSegmenter(shots=2, strategy="clustered", random_state=5).fit([X], [y])
    b = PrototypeHMMSegmenter(shots=2, strategy="clustered", random_state=5).fit([X], [y])
    for k in a.prototypes_.labels:
        np.testing.assert_array_equal(a.prototypes_.prototypes[k], b.prototypes_.prototypes[k])


def test_input_validation():
    X, y = _toy()
    with pytest.raises(ValidationError):
        PrototypeHMMSegmenter().fit([X], [y[:-1]])
    with pytest.raises(ValidationError):
        PrototypeHMMSegmenter(strategy="median").fit([X], [y])
    est = PrototypeHMMSegmenter().fit([FeatureSequence("a", X)], [Timeline("a", y)])
    with pytest.raises(ValidationError):
        est.predict(np.ones((5, 3)))
