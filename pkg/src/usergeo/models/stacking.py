"""Out-of-fold predictions and logistic-regression meta-classifiers."""

from __future__ import annotations

import warnings
from typing import Callable, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .logistic import SoftmaxRegression


def subset(X, idx):
    if isinstance(X, np.ndarray):
        return X[idx]
    return [X[i] for i in idx]


def out_of_fold_proba(make_estimator: Callable, X, y, idx: np.ndarray, n_classes: int,
                      n_splits: int = 3, seed: int = 0) -> np.ndarray:
    """Probabilities for rows ``idx`` from models that never saw them.

    ``X`` and ``y`` are indexed by node; each inner model is fitted on the
    other folds of ``idx``.
    """
    idx = np.asarray(idx)
    out = np.zeros((len(idx), n_classes))
    with warnings.catch_warnings():
        # small classes trigger sklearn's "least populated class" warning
        warnings.simplefilter("ignore", UserWarning)
        splits = list(StratifiedKFold(n_splits, shuffle=True, random_state=seed)
                      .split(np.zeros(len(idx)), y[idx]))
    for k, (tr, te) in enumerate(splits):
        est = make_estimator(k)
        est.fit(subset(X, idx[tr]), y[idx[tr]])
        out[te] = est.predict_proba(subset(X, idx[te]))
    return out


def stack_probabilities(blocks: Sequence[np.ndarray], train_idx: np.ndarray, y: np.ndarray,
                        n_classes: int, **lr_params) -> tuple[np.ndarray, SoftmaxRegression]:
    """Fit a logistic meta-classifier on concatenated probability blocks
    (rows ``train_idx``) and return its output for every row."""
    widths = {b.shape[1] for b in blocks}
    if widths != {n_classes}:
        raise ValueError(f"probability blocks have widths {sorted(widths)}, expected {n_classes}")
    Z = np.hstack(blocks)
    meta = SoftmaxRegression(n_classes=n_classes, **lr_params).fit(Z[train_idx], y[train_idx])
    return meta.predict_proba(Z), meta


def build_text_features(trans_proba: np.ndarray, liw_proba: np.ndarray, train_idx, y,
                        n_classes: int, **lr_params) -> tuple[np.ndarray, SoftmaxRegression]:
    """Per-node label scores combining the text encoder and LIW predictions.

    Rows in ``train_idx`` must hold out-of-fold predictions.
    """
    return stack_probabilities([trans_proba, liw_proba], train_idx, y, n_classes, **lr_params)


def n2v_ext_predict(graph_proba: np.ndarray, text_proba: np.ndarray, train_idx, y,
                    n_classes: int, **lr_params) -> tuple[np.ndarray, SoftmaxRegression]:
    """Meta-classifier over [embedding-classifier probs || text probs]."""
    return stack_probabilities([graph_proba, text_proba], train_idx, y, n_classes, **lr_params)
