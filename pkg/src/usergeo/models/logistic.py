"""Multinomial logistic regression on the autograd engine (base and meta classifier)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .. import autograd as ag
from .base import ParamsMixin, fit_adam, zeros


def resolve_classes(y, n_classes):
    y = np.asarray(y)
    if n_classes is None:
        classes, yi = np.unique(y, return_inverse=True)
    else:
        classes = np.arange(n_classes)
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
        yi = y.astype(np.int64)
    return classes, yi


class SoftmaxRegression(ParamsMixin, ClassifierMixin, BaseEstimator):
    """Softmax(XW + b) trained by full-batch Adam with L2 decay.

    Weights start at zero, so an unfitted-but-initialised model predicts the
    uniform distribution.
    """

    def __init__(self, lr=0.05, epochs=300, weight_decay=1e-4, n_classes=None, random_state=0):
        self.lr = lr
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.n_classes = n_classes
        self.random_state = random_state

    def _init(self, n_features, n_out):
        self.params_ = {"W": zeros((n_features, n_out), "W"), "b": zeros((1, n_out), "b")}

    def _forward(self, X) -> ag.Tensor:
        return ag.softmax(ag.matmul(ag.Tensor(X), self.params_["W"]) + self.params_["b"])

    def loss(self, X, y) -> ag.Tensor:
        return ag.cross_entropy(self._forward(X), y)

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        self.classes_, yi = resolve_classes(y, self.n_classes)
        self.n_features_in_ = X.shape[1]
        self._init(X.shape[1], len(self.classes_))
        self.loss_curve_ = fit_adam(
            lambda b: self.loss(X[b], yi[b]), self.params_, np.arange(len(X)),
            epochs=self.epochs, lr=self.lr, weight_decay=self.weight_decay,
            rng=np.random.default_rng(self.random_state))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return self._forward(X).data

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
