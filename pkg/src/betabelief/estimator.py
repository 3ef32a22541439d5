"""Scikit-learn compatible estimator wrapping the evidence network.

``EvidentialClassifier`` follows the standard fit/predict/predict_proba
contract (init parameters stored verbatim, fitted state in trailing-
underscore attributes) and adds ``predict_uncertainty`` /
``predict_evidence`` for the quantities unique to the evidential model, so
it drops into pipelines, grid search and cross-validation unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datasets import Dataset, split
from .errors import ShapeMismatchError
from .evidence import LambdaSchedule
from .network import TrainConfig, forward, train

__all__ = ["EvidentialClassifier"]


class EvidentialClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier with an explicit predictive-uncertainty output.

    A small fully-connected network emits non-negative per-class evidence;
    probabilities and the uncertainty u_hat = 2 / (alpha + beta) derive from
    the implied Beta distribution. Training minimizes the expected squared
    error under that Beta plus a decaying KL pull toward total uncertainty.

    Parameters mirror ``TrainConfig``; ``validation_fraction`` carves a
    seeded validation split out of the training data for early stopping
    (set to 0 to always train for ``max_epochs``).
    """

    def __init__(
        self,
        hidden_sizes=(64, 64),
        dropout=0.5,
        activation="relu",
        learning_rate=1e-4,
        momentum=0.0,
        batch_size=128,
        max_epochs=12,
        patience=3,
        lambda_initial=1.0,
        lambda_decay_points=(1.0 / 3.0, 2.0 / 3.0),
        lambda_decayed_values=(0.1, 0.001),
        validation_fraction=0.1,
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.dropout = dropout
        self.activation = activation
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.lambda_initial = lambda_initial
        self.lambda_decay_points = lambda_decay_points
        self.lambda_decayed_values = lambda_decayed_values
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            lambda_schedule=LambdaSchedule(
                self.lambda_initial,
                tuple(self.lambda_decay_points),
                tuple(self.lambda_decayed_values),
            ),
            dropout=self.dropout,
            hidden_sizes=tuple(self.hidden_sizes),
            activation=self.activation,
            momentum=self.momentum,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(
                f"expected exactly two classes, got {len(self.classes_)}"
            )
        y01 = (y == self.classes_[1]).astype(int)
        ds = Dataset(X, y01, np.arange(len(X)), name="fit")
        if self.validation_fraction:
            train_ds, val_ds, _ = split(
                ds, 1.0 - self.validation_fraction, self.validation_fraction, self.random_state
            )
        else:
            train_ds, val_ds = ds, None
        self.model_ = train(train_ds, val_ds, self._train_config())
        self.n_features_in_ = X.shape[1]
        self.history_ = self.model_.history
        return self

    def _evidence(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatchError(
                f"X has {X.shape[1]} features, model expects {self.n_features_in_}"
            )
        return forward(self.model_.params, X)

    def predict_evidence(self, X) -> np.ndarray:
        """Per-class evidence, columns aligned with ``classes_``."""
        evidence = self._evidence(X)
        return evidence[:, ::-1]  # internal order is (positive, negative)

    def predict_proba(self, X) -> np.ndarray:
        evidence = self._evidence(X)
        alpha = evidence[:, 0] + 1.0
        beta = evidence[:, 1] + 1.0
        p_pos = alpha / (alpha + beta)
        return np.column_stack([1.0 - p_pos, p_pos])

    def predict(self, X):
        p_pos = self.predict_proba(X)[:, 1]
        return self.classes_[(p_pos >= 0.5).astype(int)]

    def predict_uncertainty(self, X) -> np.ndarray:
        """Predictive uncertainty u_hat = 2 / (alpha + beta), in (0, 1]."""
        evidence = self._evidence(X)
        return 2.0 / (evidence[:, 0] + evidence[:, 1] + 2.0)
