"""scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..data import Domain, DomainDataset
from .config import TrainConfig
from .train import train


class WassersteinBarycenterClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Domain-generalizing classifier: ``fit(X, y, domains=...)``.

    ``transform`` returns encoder features; ``predict`` runs the selected
    checkpoint. Without ``domains`` every sample is one domain, and the
    barycenter term vanishes.
    """

    def __init__(self, method="wbae", alpha=1e-4, beta=1e-4, epsilon=0.5, delta=0.1, lr=5e-5,
                 batch_size=32, epochs=40, feature_dim=8, hidden=64, encoder_update="objective",
                 optimizer="sgd", random_state=0):
        self.method = method
        self.alpha = alpha
        self.beta = beta
        self.epsilon = epsilon
        self.delta = delta
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.encoder_update = encoder_update
        self.optimizer = optimizer
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            method=self.method, alpha=self.alpha, beta=self.beta, epsilon=self.epsilon,
            delta=self.delta, lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            seed=int(self.random_state or 0), feature_dim=self.feature_dim, hidden=self.hidden,
            encoder_update=self.encoder_update, optimizer=self.optimizer,
            monitor_divergence=False,
        )

    def fit(self, X, y, domains=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        domains = np.zeros(len(y), dtype=int) if domains is None else np.asarray(domains)
        if domains.shape[0] != X.shape[0]:
            raise ValueError("domains must have one entry per sample")
        names = list(dict.fromkeys(domains.tolist()))
        ds = DomainDataset(
            tuple(Domain(str(n), X[domains == n], y_idx[domains == n]) for n in names),
            self.classes_.size,
        )
        self.report_, self.model_ = train(self._config(), ds, return_model=True)
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict_proba(self, X):
        return self.model_.predict_proba(self._check(X))

    def predict(self, X):
        X = self._check(X)
        return self.classes_[self.model_.predict(X)]

    def transform(self, X):
        return self.model_.features(self._check(X))
