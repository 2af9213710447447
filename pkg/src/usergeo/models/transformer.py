"""Text-only location classifier: embeddings + positional encoding, multi-head
attention pooled by a learned context query, feed-forward, softmax."""

from __future__ import annotations

import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .. import autograd as ag
from ..textfeat import Vocabulary, init_embeddings, load_embeddings
from .base import ParamsMixin, fit_adam, glorot, split_validation, zeros
from .logistic import resolve_classes

MASK_VALUE = -1e9


def sinusoidal_encoding(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    div = np.power(10000.0, np.arange(0, d, 2) / d)
    pe = np.zeros((max_len, d))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div[: d // 2])
    return pe


class TransformerTextClassifier(ParamsMixin, ClassifierMixin, BaseEstimator):
    """Attention-pooled encoder over a user's tokens.

    ``X`` is a sequence of token lists (one per user). The vocabulary is built
    from the training documents; embeddings come from ``embeddings_path``
    (GloVe text format) when given, and are fine-tuned.
    """

    def __init__(self, d_model=300, n_heads=6, max_len=256, ff_dim=128, min_freq=5,
                 embeddings_path=None, lr=1e-3, epochs=20, batch_size=32, patience=3,
                 val_fraction=0.1, weight_decay=0.0, n_classes=None, random_state=0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.max_len = max_len
        self.ff_dim = ff_dim
        self.min_freq = min_freq
        self.embeddings_path = embeddings_path
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.val_fraction = val_fraction
        self.weight_decay = weight_decay
        self.n_classes = n_classes
        self.random_state = random_state

    def _init_params(self, rng, emb: np.ndarray, n_out: int):
        d, h = emb.shape[1], self.n_heads
        if d % h:
            raise ValueError(f"embedding dimension {d} is not divisible by {h} heads")
        dk = d // h
        p = {"E": ag.Parameter(emb, "E"),
             "Q": ag.Parameter(rng.normal(0, 1.0 / math.sqrt(d), size=(1, d)), "Q")}
        for i in range(h):
            for kind in "QKV":
                p[f"W{kind}{i}"] = glorot(rng, d, dk, f"W{kind}{i}")
        p["WO"] = glorot(rng, d, d, "WO")
        p["W1"] = glorot(rng, d, self.ff_dim, "W1")
        p["b1"] = zeros((1, self.ff_dim), "b1")
        p["W2"] = glorot(rng, self.ff_dim, n_out, "W2")
        p["b2"] = zeros((1, n_out), "b2")
        self.params_ = p
        self.d_, self.dk_ = d, dk

    def _batch(self, seqs):
        T = max(1, max(len(s) for s in seqs))
        ids = np.zeros((len(seqs), T), dtype=np.int64)
        mask = np.full((len(seqs), T), MASK_VALUE)
        for b, s in enumerate(seqs):
            ids[b, :len(s)] = s
            mask[b, :len(s)] = 0.0
        return ids, mask

    def _forward(self, seqs, return_attention=False):
        p = self.params_
        ids, mask = self._batch(seqs)
        B, T = ids.shape
        pe = np.tile(self.pe_[:T], (B, 1))
        H = ag.take_rows(p["E"], ids.ravel(), padding_idx=0) + pe
        heads, attn = [], []
        for i in range(self.n_heads):
            q = ag.matmul(p["Q"], p[f"WQ{i}"])
            K = ag.matmul(H, p[f"WK{i}"])
            scores = ag.reshape(ag.matmul(K, ag.transpose(q)), (B, T))
            a = ag.softmax(ag.scale(scores, 1.0 / math.sqrt(self.dk_)) + mask)
            V = ag.matmul(H, p[f"WV{i}"])
            heads.append(ag.weighted_row_sum(a, V))
            attn.append(a.data)
        o = ag.matmul(ag.concat(heads, axis=1), p["WO"])
        f = ag.relu(ag.matmul(o, p["W1"]) + p["b1"])
        probs = ag.softmax(ag.matmul(f, p["W2"]) + p["b2"])
        if return_attention:
            return probs, attn, o
        return probs

    def _encode(self, X):
        return [self.vocab_.encode(doc, self.max_len) for doc in X]

    def fit(self, X, y):
        X = list(X)
        self.classes_, yi = resolve_classes(y, self.n_classes)
        rng = np.random.default_rng(self.random_state)
        self.vocab_ = Vocabulary.build([doc[:self.max_len] for doc in X], self.min_freq)
        if self.embeddings_path:
            emb = load_embeddings(self.embeddings_path, self.vocab_, self.random_state).matrix
        else:
            emb = init_embeddings(self.vocab_, self.d_model, rng)
        self._init_params(rng, emb, len(self.classes_))
        self.pe_ = sinusoidal_encoding(self.max_len, self.d_)
        self.prior_ = np.bincount(yi, minlength=len(self.classes_)) / max(len(yi), 1)
        seqs = self._encode(X)
        usable = np.array([i for i, s in enumerate(seqs) if len(s)], dtype=np.int64)
        train, val = split_validation(usable, yi[usable], self.val_fraction, rng)

        def loss(batch):
            return ag.cross_entropy(self._forward([seqs[i] for i in batch]), yi[batch])

        self.loss_curve_ = fit_adam(loss, self.params_, train, val, epochs=self.epochs,
                                    batch_size=self.batch_size, lr=self.lr,
                                    weight_decay=self.weight_decay,
                                    patience=self.patience, rng=rng)
        return self

    def predict_proba(self, X, batch_size=256):
        check_is_fitted(self, "params_")
        seqs = self._encode(list(X))
        out = np.tile(self.prior_, (len(seqs), 1))
        live = [i for i, s in enumerate(seqs) if len(s)]
        if len(live) < len(seqs):
            warnings.warn(f"{len(seqs) - len(live)} users without tokens get the label prior",
                          stacklevel=2)
        for start in range(0, len(live), batch_size):
            chunk = live[start:start + batch_size]
            out[chunk] = self._forward([seqs[i] for i in chunk]).data
        return out

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def attention(self, X):
        """Per-head attention weights (B x T) for a batch of token lists."""
        check_is_fitted(self, "params_")
        _, attn, _ = self._forward(self._encode(list(X)), return_attention=True)
        return attn
