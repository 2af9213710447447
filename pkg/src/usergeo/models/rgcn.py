"""Relational GCN over a multiplex graph, trained transductively.

Layer update, per relation r with row-normalised weighted adjacency A_r:

    H' = act( sum_r A_r H W_r + H W_0 + b )

with ReLU between layers and softmax at the output. A_r[i, j] = w_ij / c_ir
where c_ir is node i's weighted degree in relation r.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .. import autograd as ag
from ..graph import MultiplexGraph
from .base import ParamsMixin, fit_adam, glorot, split_validation, zeros
from .logistic import resolve_classes


class RGCNClassifier(ParamsMixin, ClassifierMixin, BaseEstimator):
    """Semi-supervised node classifier.

    ``fit(X, y)`` takes features for every node of ``graph`` and labels with
    ``-1`` marking unlabelled nodes; ``predict_proba(X)`` returns one row per
    node.
    """

    def __init__(self, graph: MultiplexGraph | None = None, hidden=(128, 128, 128), lr=0.01,
                 epochs=200, patience=20, val_fraction=0.1, weight_decay=5e-4,
                 n_classes=None, random_state=0):
        self.graph = graph
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.weight_decay = weight_decay
        self.n_classes = n_classes
        self.random_state = random_state

    def _adjacency(self, graph):
        return {r: graph.layers[r].row_normalized() for r in self.relations_}

    def _init_params(self, rng, n_in, n_out):
        widths = [n_in, *self.hidden, n_out]
        p = {}
        for layer, (a, b) in enumerate(zip(widths, widths[1:])):
            for r in self.relations_:
                p[f"W_{r}_{layer}"] = glorot(rng, a, b, f"W_{r}_{layer}")
            p[f"W0_{layer}"] = glorot(rng, a, b, f"W0_{layer}")
            p[f"b_{layer}"] = zeros((1, b), f"b_{layer}")
        self.params_ = p
        self.n_layers_ = len(widths) - 1

    def forward(self, X, adjacency=None) -> ag.Tensor:
        adjacency = adjacency if adjacency is not None else self.adjacency_
        p = self.params_
        h = ag.Tensor(X)
        for layer in range(self.n_layers_):
            z = ag.matmul(h, p[f"W0_{layer}"]) + p[f"b_{layer}"]
            for r in self.relations_:
                z = z + ag.spmm(adjacency[r], ag.matmul(h, p[f"W_{r}_{layer}"]))
            h = ag.relu(z) if layer < self.n_layers_ - 1 else ag.softmax(z)
        return h

    def fit(self, X, y):
        if self.graph is None:
            raise ValueError("RGCNClassifier needs a graph")
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if len(X) != self.graph.n or len(y) != self.graph.n:
            raise ValueError(f"need one feature row and label per node ({self.graph.n})")
        labelled = np.flatnonzero(y >= 0)
        self.classes_, yl = resolve_classes(y[labelled], self.n_classes)
        yi = np.full(len(y), -1)
        yi[labelled] = yl
        rng = np.random.default_rng(self.random_state)
        self.relations_ = list(self.graph.relations)
        self.adjacency_ = self._adjacency(self.graph)
        self.n_features_in_ = X.shape[1]
        self._init_params(rng, X.shape[1], len(self.classes_))
        train, val = split_validation(labelled, yi[labelled], self.val_fraction, rng)

        def loss(batch):
            out = self.forward(X)
            return ag.cross_entropy(ag.take_rows(out, batch), yi[batch])

        self.loss_curve_ = fit_adam(loss, self.params_, train, val, epochs=self.epochs,
                                    lr=self.lr, weight_decay=self.weight_decay,
                                    patience=self.patience, rng=rng)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return self.forward(X).data

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
