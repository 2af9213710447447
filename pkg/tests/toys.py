"""Small seeded model fixtures shared by the model tests and the acceptance suite."""

import numpy as np

from usergeo import autograd as ag
from usergeo.graph import MultiplexGraph, WeightedAdjacency
from usergeo.models import (GraphSAGEClassifier, RGCNClassifier, SoftmaxRegression,
                            TransformerTextClassifier)


def random_adjacency(rng, n, density=0.4, max_w=5, isolated=()):
    A = rng.integers(1, max_w + 1, (n, n)) * (rng.random((n, n)) < density)
    A = np.triu(A, 1)
    A = A + A.T
    for i in isolated:
        A[i, :] = A[:, i] = 0
    return A.astype(float)


def randomize(params, rng, scale=0.5):
    """Replace every parameter (biases included) with random values."""
    for p in params.values():
        p.data[...] = rng.normal(0, scale, p.data.shape)


def toy_rgcn(seed=0, n=8, n_in=3, n_classes=3, hidden=(4,)):
    rng = np.random.default_rng(seed)
    layers = {"mention": random_adjacency(rng, n, isolated=(n - 1,)),
              "follower": random_adjacency(rng, n, density=0.3)}
    g = MultiplexGraph(n, {r: WeightedAdjacency.from_dense(A) for r, A in layers.items()})
    X = rng.random((n, n_in))
    y = rng.integers(0, n_classes, n)
    model = RGCNClassifier(g, hidden=hidden, epochs=0, val_fraction=0, n_classes=n_classes,
                           random_state=seed).fit(X, y)
    randomize(model.params_, rng)
    return model, layers, X, y


def rgcn_oracle_weights(model, layers):
    out = []
    for layer in range(model.n_layers_):
        W = {"W0": model.params_[f"W0_{layer}"].data, "b": model.params_[f"b_{layer}"].data}
        for r in layers:
            W[r] = model.params_[f"W_{r}_{layer}"].data
        out.append(W)
    return out


def toy_sage(seed=0, n=8, n_in=3, n_classes=3, hidden=(4,)):
    rng = np.random.default_rng(seed)
    A = random_adjacency(rng, n, isolated=(n - 1,))
    g = WeightedAdjacency.from_dense(A)
    X = rng.random((n, n_in))
    y = rng.integers(0, n_classes, n)
    model = GraphSAGEClassifier(g, hidden=hidden, sample_sizes=(n,) * (len(hidden) + 1), epochs=0,
                                val_fraction=0, n_classes=n_classes, random_state=seed).fit(X, y)
    randomize(model.params_, rng)
    return model, A, X, y


def sage_oracle_weights(model):
    return [(model.params_[f"W_{k}"].data, model.params_[f"b_{k}"].data)
            for k in range(model.n_layers_)]


def toy_transformer(seed=0, d=12, heads=6, vocab=20, n_classes=3, n_users=6):
    rng = np.random.default_rng(seed)
    words = [f"w{k}" for k in range(vocab)]
    docs = [list(rng.choice(words, int(rng.integers(1, 9)))) for _ in range(n_users)]
    docs[0] = words  # every word present so the vocabulary holds all of them
    y = np.arange(n_users) % n_classes
    model = TransformerTextClassifier(d_model=d, n_heads=heads, max_len=32, ff_dim=8, min_freq=1,
                                      epochs=0, val_fraction=0, n_classes=n_classes,
                                      random_state=seed).fit(docs, y)
    randomize(model.params_, rng)
    model.params_["E"].data[0] = 0.0
    return model, docs, y


def transformer_oracle_args(model):
    p = {k: v.data for k, v in model.params_.items()}
    h = model.n_heads
    return dict(E=p["E"], pe=model.pe_, Q=p["Q"],
                WQ=[p[f"WQ{i}"] for i in range(h)], WK=[p[f"WK{i}"] for i in range(h)],
                WV=[p[f"WV{i}"] for i in range(h)], WO=p["WO"], W1=p["W1"], b1=p["b1"],
                W2=p["W2"], b2=p["b2"])


def toy_logistic(seed=0, n=10, n_in=4, n_classes=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_in))
    y = np.arange(n) % n_classes
    model = SoftmaxRegression(epochs=0, n_classes=n_classes).fit(X, y)
    randomize(model.params_, rng)
    return model, X, y


def loss_closures(seed=0):
    """name -> (closure returning a scalar loss Tensor, parameter list)."""
    out = {}
    m, _, X, y = toy_rgcn(seed)
    out["rgcn"] = (lambda m=m, X=X, y=y: ag.cross_entropy(m.forward(X), y), m.params_.values())
    m, _, X, y = toy_sage(seed)
    aggs = m.aggregators(m.graph)
    out["graphsage"] = (lambda m=m, X=X, y=y, a=aggs: ag.cross_entropy(m.forward(X, a), y),
                        m.params_.values())
    m, docs, y = toy_transformer(seed)
    seqs = m._encode(docs)
    out["trans_txt"] = (lambda m=m, s=seqs, y=y: ag.cross_entropy(m._forward(s), y),
                        m.params_.values())
    m, X, y = toy_logistic(seed)
    out["logistic"] = (lambda m=m, X=X, y=y: m.loss(X, y), m.params_.values())
    return out
