"""Node2vec+ biased random walks on weighted graphs and skip-gram embeddings.

From current node ``v`` reached from ``t``, the unnormalised probability of
stepping to neighbour ``x`` is ``w(v, x) * alpha`` with

    alpha = 1/p   if x == t
    alpha = 1     if w(x, t) > 0 and w(x, t) >= beta * mean edge weight of x
    alpha = 1/q   otherwise

The first step of a walk is proportional to edge weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..graph import WeightedAdjacency


@dataclass
class N2VConfig:
    p: float = 1.0
    q: float = 1.0
    beta: float = 1.0
    walk_length: int = 80
    num_walks: int = 10
    window: int = 5
    dim: int = 128
    negative: int = 5
    epochs: int = 1
    lr: float = 0.025
    batch_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be >= 2")


class BiasedWalker:
    """Second-order walker with cached per-edge transition tables."""

    def __init__(self, adj: WeightedAdjacency, p: float, q: float, beta: float):
        m = adj.matrix
        self.indptr, self.indices, self.data = m.indptr, m.indices, m.data
        deg = np.diff(self.indptr)
        wsum = np.asarray(m.sum(axis=1)).ravel()
        self.mean_weight = np.divide(wsum, deg, out=np.zeros_like(wsum), where=deg > 0)
        self.p, self.q, self.beta = p, q, beta
        self._cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def neighbors(self, v):
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def edge_weight_to(self, t: int, xs: np.ndarray) -> np.ndarray:
        nbrs, w = self.neighbors(t)
        if len(nbrs) == 0:
            return np.zeros(len(xs))
        pos = np.minimum(np.searchsorted(nbrs, xs), len(nbrs) - 1)
        return np.where(nbrs[pos] == xs, w[pos], 0.0)

    def transition(self, t: int, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Candidates and unnormalised probabilities for the step out of ``v``
        having arrived from ``t``."""
        key = (t, v)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        xs, w = self.neighbors(v)
        w_xt = self.edge_weight_to(t, xs)
        close = (w_xt > 0) & (w_xt >= self.beta * self.mean_weight[xs])
        alpha = np.where(xs == t, 1.0 / self.p, np.where(close, 1.0, 1.0 / self.q))
        out = (xs, w * alpha)
        self._cache[key] = out
        return out

    def walk(self, start: int, length: int, rng: np.random.Generator) -> list[int]:
        walk = [start]
        xs, w = self.neighbors(start)
        if len(xs) == 0:
            return walk
        walk.append(int(xs[_draw(w, rng)]))
        while len(walk) < length:
            xs, w = self.transition(walk[-2], walk[-1])
            if len(xs) == 0:
                break
            walk.append(int(xs[_draw(w, rng)]))
        return walk


def _draw(weights: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(weights)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right"))


def node2vec_walks(adj: WeightedAdjacency, config: N2VConfig) -> list[np.ndarray]:
    """``num_walks`` walks from every node; each walk has its own seeded stream.

    Walks shorter than 2 nodes (isolated starts) are dropped.
    """
    walker = BiasedWalker(adj, config.p, config.q, config.beta)
    walks = []
    for r in range(config.num_walks):
        for v in range(adj.n):
            rng = np.random.default_rng([config.seed, r, v])
            w = walker.walk(v, config.walk_length, rng)
            if len(w) >= 2:
                walks.append(np.asarray(w, dtype=np.int64))
    return walks


def skipgram_pairs(walks, window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for w in walks:
        L = len(w)
        for off in range(1, window + 1):
            if off >= L:
                break
            centers += [w[:-off], w[off:]]
            contexts += [w[off:], w[:-off]]
    if not centers:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _scatter_mean(rows: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Average ``values`` into an ``n``-row array by row index.

    Averaging rather than summing keeps a node that recurs many times in one
    minibatch (common on small graphs) from taking an oversized step.
    """
    counts = np.bincount(rows, minlength=n).astype(float)
    weights = 1.0 / counts[rows]
    m = sp.csr_matrix((weights, (rows, np.arange(len(rows)))), shape=(n, len(rows)))
    return m @ values


def skipgram_embed(walks, n_nodes: int, config: N2VConfig) -> np.ndarray:
    """Skip-gram with negative sampling, minibatched SGD with linear lr decay.

    Noise distribution is node frequency in the walks raised to 0.75.
    """
    rng = np.random.default_rng([config.seed, 7])
    d = config.dim
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(n_nodes, d))
    w_out = np.zeros((n_nodes, d))
    if config.epochs == 0 or not walks:
        return w_in
    centers, contexts = skipgram_pairs(walks, config.window)
    freq = np.bincount(np.concatenate(walks), minlength=n_nodes).astype(float) ** 0.75
    noise_cdf = np.cumsum(freq / freq.sum())
    total_steps = config.epochs * int(np.ceil(len(centers) / config.batch_size))
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(centers))
        for start in range(0, len(order), config.batch_size):
            sel = order[start:start + config.batch_size]
            c, o = centers[sel], contexts[sel]
            neg = np.minimum(np.searchsorted(noise_cdf, rng.random((len(sel), config.negative))),
                             n_nodes - 1)
            lr = config.lr * max(1e-4, 1.0 - step / total_steps)
            step += 1
            vin = w_in[c]                                   # B x d
            targets = np.concatenate([o[:, None], neg], axis=1)   # B x (1+K)
            vout = w_out[targets]                           # B x (1+K) x d
            score = np.einsum("bd,bkd->bk", vin, vout)
            label = np.zeros_like(score)
            label[:, 0] = 1.0
            g = (1.0 / (1.0 + np.exp(-np.clip(score, -30, 30))) - label) * lr
            grad_in = np.einsum("bk,bkd->bd", g, vout)
            grad_out = g[:, :, None] * vin[:, None, :]
            w_out -= _scatter_mean(targets.ravel(), grad_out.reshape(-1, d), n_nodes)
            w_in -= _scatter_mean(c, grad_in, n_nodes)
    return w_in


class Node2VecPlus(TransformerMixin, BaseEstimator):
    """Unsupervised node embeddings; ``fit(graph)`` then ``transform(nodes)``."""

    def __init__(self, p=1.0, q=1.0, beta=1.0, walk_length=80, num_walks=10, window=5,
                 dim=128, negative=5, epochs=1, lr=0.025, batch_size=1024, random_state=0):
        self.p = p
        self.q = q
        self.beta = beta
        self.walk_length = walk_length
        self.num_walks = num_walks
        self.window = window
        self.dim = dim
        self.negative = negative
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state

    def config(self) -> N2VConfig:
        return N2VConfig(self.p, self.q, self.beta, self.walk_length, self.num_walks,
                         self.window, self.dim, self.negative, self.epochs, self.lr,
                         self.batch_size, self.random_state)

    def fit(self, X: WeightedAdjacency, y=None):
        cfg = self.config()
        self.walks_ = node2vec_walks(X, cfg)
        self.embedding_ = skipgram_embed(self.walks_, X.n, cfg)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "embedding_")
        if X is None:
            return self.embedding_
        return self.embedding_[np.asarray(X, dtype=np.int64)]

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_
