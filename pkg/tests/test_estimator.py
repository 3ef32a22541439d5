import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from betabelief.datasets import generate_synthetic
from betabelief.errors import ShapeMismatchError
from betabelief.estimator import EvidentialClassifier

FAST = dict(
    hidden_sizes=(8,),
    dropout=0.0,
    activation="softplus",
    learning_rate=0.1,
    batch_size=32,
    max_epochs=10,
    patience=10,
    validation_fraction=0.0,
    random_state=0,
)


@pytest.fixture(scope="module")
def blobs():
    ds = generate_synthetic(400, 0.05, seed=0)
    return ds.features, ds.labels


def test_get_set_params_round_trip():
    clf = EvidentialClassifier(**FAST)
    params = clf.get_params()
    assert params["learning_rate"] == 0.1
    other = EvidentialClassifier().set_params(**params)
    assert other.get_params() == params


def test_clone_compatible(blobs):
    clf = EvidentialClassifier(**FAST)
    cloned = clone(clf)
    assert cloned.get_params() == clf.get_params()


def test_fit_predict_shapes(blobs):
    X, y = blobs
    clf = EvidentialClassifier(**FAST).fit(X, y)
    assert clf.n_features_in_ == 2
    np.testing.assert_array_equal(clf.classes_, [0, 1])
    proba = clf.predict_proba(X)
    assert proba.shape == (len(X), 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    labels = clf.predict(X)
    assert set(np.unique(labels)) <= {0, 1}
    assert np.mean(labels == y) >= 0.9
    u = clf.predict_uncertainty(X)
    assert u.shape == (len(X),)
    assert np.all((u > 0.0) & (u <= 1.0))


def test_evidence_columns_align_with_classes(blobs):
    X, y = blobs
    clf = EvidentialClassifier(**FAST).fit(X, y)
    evidence = clf.predict_evidence(X)
    assert evidence.shape == (len(X), 2)
    assert np.all(evidence >= 0.0)
    alpha = evidence[:, 1] + 1.0
    beta = evidence[:, 0] + 1.0
    np.testing.assert_allclose(alpha / (alpha + beta), clf.predict_proba(X)[:, 1], rtol=1e-12)


def test_arbitrary_binary_labels(blobs):
    X, y = blobs
    relabeled = np.where(y == 1, 5, -5)
    clf = EvidentialClassifier(**FAST).fit(X, relabeled)
    np.testing.assert_array_equal(clf.classes_, [-5, 5])
    assert set(np.unique(clf.predict(X))) <= {-5, 5}


def test_single_class_rejected(blobs):
    X, _ = blobs
    with pytest.raises(ValueError):
        EvidentialClassifier(**FAST).fit(X, np.zeros(len(X)))


def test_unfitted_raises(blobs):
    X, _ = blobs
    with pytest.raises(NotFittedError):
        EvidentialClassifier(**FAST).predict(X)


def test_feature_mismatch(blobs):
    X, y = blobs
    clf = EvidentialClassifier(**FAST).fit(X, y)
    with pytest.raises(ShapeMismatchError):
        clf.predict(np.zeros((3, 5)))


def test_deterministic_per_random_state(blobs):
    X, y = blobs
    a = EvidentialClassifier(**FAST).fit(X, y).predict_proba(X)
    b = EvidentialClassifier(**FAST).fit(X, y).predict_proba(X)
    np.testing.assert_array_equal(a, b)


def test_early_stopping_uses_validation_split(blobs):
    X, y = blobs
    clf = EvidentialClassifier(
        **{**FAST, "validation_fraction": 0.2, "patience": 1, "max_epochs": 40}
    ).fit(X, y)
    assert all(h.val_loss is not None for h in clf.history_)
    assert len(clf.history_) <= 40


def test_cross_val_smoke(blobs):
    X, y = blobs
    scores = cross_val_score(EvidentialClassifier(**FAST), X, y, cv=2)
    assert scores.shape == (2,)
    assert scores.min() >= 0.8


def test_pipeline_smoke(blobs):
    X, y = blobs
    pipe = make_pipeline(StandardScaler(), EvidentialClassifier(**FAST))
    pipe.fit(X, y)
    assert pipe.score(X, y) >= 0.8
