"""GraphSAGE with a mean aggregator over sampled, weighted neighbourhoods.

    h_i' = act( [h_i || mean_w(h_j : j sampled from N(i))] W + b )

``mean_w`` weights neighbours by edge weight, normalised over the sampled
set; a node without neighbours aggregates the zero vector.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .. import autograd as ag
from ..graph import WeightedAdjacency
from .base import ParamsMixin, fit_adam, glorot, split_validation, zeros
from .logistic import resolve_classes


def sample_neighbors(adj: WeightedAdjacency, size: int | None,
                     rng: np.random.Generator | None) -> sp.csr_matrix:
    """Row-normalised aggregation matrix over at most ``size`` neighbours per
    node, drawn uniformly without replacement. ``size=None`` keeps all."""
    a = adj.matrix
    if size is None or rng is None or a.nnz == 0 or np.diff(a.indptr).max() <= size:
        keep = a
    else:
        rows = np.repeat(np.arange(a.shape[0]), np.diff(a.indptr))
        keys = rng.random(a.nnz)
        order = np.lexsort((keys, rows))
        start = a.indptr[rows[order]]
        rank = np.empty(a.nnz, dtype=np.int64)
        rank[order] = np.arange(a.nnz) - start
        sel = rank < size
        keep = sp.csr_matrix((a.data[sel], (rows[sel], a.indices[sel])), shape=a.shape)
    return WeightedAdjacency(keep).row_normalized()


class GraphSAGEClassifier(ParamsMixin, ClassifierMixin, BaseEstimator):
    """Inductive node classifier on a single weighted graph.

    Trained like RGCNClassifier (labels ``-1`` for unlabelled nodes).
    ``predict_proba(X, graph=...)`` accepts a different graph, e.g. one that
    includes nodes unseen during training.

    ``sample_sizes[0]`` is the neighbourhood size of the output layer (first
    hop from the target node), as in the usual GraphSAGE convention. Training
    resamples every epoch; prediction uses full neighbourhoods unless
    ``sample_at_predict`` is set.
    """

    def __init__(self, graph: WeightedAdjacency | None = None, hidden=(64,), sample_sizes=(25, 10),
                 lr=0.01, epochs=200, patience=20, val_fraction=0.1, weight_decay=5e-4,
                 sample_at_predict=False, n_classes=None, random_state=0):
        self.graph = graph
        self.hidden = hidden
        self.sample_sizes = sample_sizes
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.weight_decay = weight_decay
        self.sample_at_predict = sample_at_predict
        self.n_classes = n_classes
        self.random_state = random_state

    def _init_params(self, rng, n_in, n_out):
        widths = [n_in, *self.hidden, n_out]
        if len(widths) - 1 != len(self.sample_sizes):
            raise ValueError("need one sample size per layer")
        self.params_ = {}
        for layer, (a, b) in enumerate(zip(widths, widths[1:])):
            self.params_[f"W_{layer}"] = glorot(rng, 2 * a, b, f"W_{layer}")
            self.params_[f"b_{layer}"] = zeros((1, b), f"b_{layer}")
        self.n_layers_ = len(widths) - 1

    def aggregators(self, graph: WeightedAdjacency, rng=None) -> list[sp.csr_matrix]:
        """Per-layer aggregation matrices, input layer first."""
        sizes = list(reversed(self.sample_sizes))
        return [sample_neighbors(graph, s, rng) for s in sizes]

    def forward(self, X, aggs) -> ag.Tensor:
        h = ag.Tensor(X)
        for layer in range(self.n_layers_):
            neigh = ag.spmm(aggs[layer], h)
            z = ag.matmul(ag.concat([h, neigh], axis=1), self.params_[f"W_{layer}"]) \
                + self.params_[f"b_{layer}"]
            h = ag.relu(z) if layer < self.n_layers_ - 1 else ag.softmax(z)
        return h

    def fit(self, X, y):
        if self.graph is None:
            raise ValueError("GraphSAGEClassifier needs a graph")
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if len(X) != self.graph.n or len(y) != self.graph.n:
            raise ValueError(f"need one feature row and label per node ({self.graph.n})")
        labelled = np.flatnonzero(y >= 0)
        self.classes_, yl = resolve_classes(y[labelled], self.n_classes)
        yi = np.full(len(y), -1)
        yi[labelled] = yl
        rng = np.random.default_rng(self.random_state)
        self.n_features_in_ = X.shape[1]
        self._init_params(rng, X.shape[1], len(self.classes_))
        train, val = split_validation(labelled, yi[labelled], self.val_fraction, rng)
        sample_rng = np.random.default_rng([self.random_state, 1])
        full = self.aggregators(self.graph)

        def loss(batch, aggs=None):
            aggs = aggs if aggs is not None else self.aggregators(self.graph, sample_rng)
            return ag.cross_entropy(ag.take_rows(self.forward(X, aggs), batch), yi[batch])

        self.loss_curve_ = fit_adam(loss, self.params_, train, val, epochs=self.epochs,
                                    lr=self.lr, weight_decay=self.weight_decay,
                                    patience=self.patience, rng=rng,
                                    val_loss_fn=lambda b: loss(b, full))
        return self

    def predict_proba(self, X, graph: WeightedAdjacency | None = None):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        graph = graph if graph is not None else self.graph
        if len(X) != graph.n:
            raise ValueError("feature rows must match graph nodes")
        rng = np.random.default_rng([self.random_state, 2]) if self.sample_at_predict else None
        return self.forward(X, self.aggregators(graph, rng)).data

    def predict(self, X, graph: WeightedAdjacency | None = None):
        return self.classes_[np.argmax(self.predict_proba(X, graph), axis=1)]
