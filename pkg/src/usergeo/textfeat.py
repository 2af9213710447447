"""Tokenisation, vocabularies, chi-square location indicative words, embeddings."""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

PAD, UNK = "<pad>", "<unk>"
URL, MENTION, NUM = "<url>", "<mention>", "<num>"
PLACEHOLDERS = frozenset({PAD, UNK, URL, MENTION, NUM})

_TOKEN_RE = re.compile(
    r"(?P<url>(?:https?://|www\.)\S+)"
    r"|(?P<mention>@\w+)"
    r"|(?P<num>\d+(?:[.,]\d+)*)"
    r"|#?(?P<word>[^\W\d_](?:[^\W_]|['’][^\W_])*)",
    re.UNICODE,
)


def tokenize(text: str) -> list[str]:
    """Case-folded tokens; URLs, mentions and numbers become placeholders,
    hashtags keep their word."""
    out = []
    for m in _TOKEN_RE.finditer(text.casefold()):
        kind = m.lastgroup
        if kind == "url":
            out.append(URL)
        elif kind == "mention":
            out.append(MENTION)
        elif kind == "num":
            out.append(NUM)
        else:
            out.append(m.group("word"))
    return out


def user_tokens(user, max_len: int | None = None) -> list[str]:
    """Tokens of a user's tweets concatenated in timestamp order."""
    toks: list[str] = []
    for t in sorted(user.tweets, key=lambda t: (t.timestamp, t.tweet_id)):
        toks.extend(tokenize(t.text))
        if max_len is not None and len(toks) >= max_len:
            return toks[:max_len]
    return toks


@dataclass
class Vocabulary:
    tokens: list[str]
    doc_freq: dict[str, int] = field(default_factory=dict)
    min_freq: int = 1

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, docs: Iterable[Sequence[str]], min_freq: int = 5) -> "Vocabulary":
        df: Counter = Counter()
        for doc in docs:
            df.update(set(doc))
        kept = sorted((t for t, c in df.items() if c >= min_freq and t not in (PAD, UNK)),
                      key=lambda t: (-df[t], t))
        return cls([PAD, UNK] + kept, {t: df[t] for t in kept}, min_freq)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def encode(self, doc: Sequence[str], max_len: int | None = None) -> np.ndarray:
        unk = self.index[UNK]
        ids = [self.index.get(t, unk) for t in doc]
        if max_len is not None:
            ids = ids[:max_len]
        return np.asarray(ids, dtype=np.int64)


def chi2_statistics(present: np.ndarray, labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Chi-square statistic of each column of a binary user-by-token presence
    matrix against the label, over the 2 x L presence/label contingency table.

    Tokens present in every user or in none score 0.
    """
    present = np.asarray(present, dtype=np.float64)
    onehot = np.eye(n_labels)[labels]                        # users x L
    o1 = present.T @ onehot                                 # tokens x L, present
    col = onehot.sum(axis=0)                                # users per label
    o0 = col[None, :] - o1                                  # absent
    n = float(len(labels))
    r1 = o1.sum(axis=1, keepdims=True)
    r0 = n - r1
    stat = np.zeros(present.shape[1])
    for obs, row in ((o1, r1), (o0, r0)):
        exp = row * col[None, :] / n
        with np.errstate(divide="ignore", invalid="ignore"):
            cell = np.where(exp > 0, (obs - exp) ** 2 / exp, 0.0)
        stat += cell.sum(axis=1)
    degenerate = (r1[:, 0] == 0) | (r0[:, 0] == 0)
    stat[degenerate] = 0.0
    return stat


@dataclass
class LIWTable:
    tokens: list[str]
    chi2: np.ndarray
    scores: np.ndarray          # tokens x L log P(label | token present), add-one smoothed
    prior: np.ndarray           # training label frequencies

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def n_labels(self) -> int:
        return len(self.prior)

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["token", "chi2"] + [f"label_{k}" for k in range(self.n_labels)])
            for t, c, s in zip(self.tokens, self.chi2, self.scores):
                w.writerow([t, repr(float(c))] + [repr(float(v)) for v in s])


def chi2_liw(docs: Sequence[Iterable[str]], labels, top_k: int = 1000,
             n_labels: int | None = None, min_freq: int = 1) -> LIWTable:
    """Select the ``top_k`` tokens by chi-square and score them per label.

    Presence is binary per user. Placeholder tokens are never candidates.
    Ties in the statistic are broken alphabetically.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = int(n_labels if n_labels is not None else labels.max() + 1)
    if n_labels < 2:
        raise ValueError("chi-square LIW selection needs at least 2 labels")
    sets = [set(d) - PLACEHOLDERS for d in docs]
    df = Counter(t for s in sets for t in s)
    vocab = sorted(t for t, c in df.items() if c >= min_freq)
    col = {t: j for j, t in enumerate(vocab)}
    present = np.zeros((len(sets), len(vocab)))
    for i, s in enumerate(sets):
        for t in s:
            j = col.get(t)
            if j is not None:
                present[i, j] = 1.0
    stat = chi2_statistics(present, labels, n_labels)
    order = sorted(range(len(vocab)), key=lambda j: (-stat[j], vocab[j]))[:top_k]
    onehot = np.eye(n_labels)[labels]
    counts = present[:, order].T @ onehot                      # selected x L
    scores = np.log((counts + 1.0) / (counts.sum(axis=1, keepdims=True) + n_labels))
    prior = np.bincount(labels, minlength=n_labels) / len(labels)
    return LIWTable([vocab[j] for j in order], stat[order], scores, prior)


def liw_predict(doc: Iterable[str], table: LIWTable) -> np.ndarray:
    """Softmax of summed log-scores over the user's distinct LIW tokens;
    the training prior when the user has none."""
    hits = sorted({table.index[t] for t in doc if t in table.index})
    if not hits:
        return table.prior.copy()
    z = table.scores[hits].sum(axis=0)
    z = np.exp(z - z.max())
    return z / z.sum()


class LIWClassifier(ClassifierMixin, BaseEstimator):
    """Location indicative word classifier over token lists."""

    def __init__(self, top_k=1000, min_freq=5, n_classes=None):
        self.top_k = top_k
        self.min_freq = min_freq
        self.n_classes = n_classes

    def fit(self, X, y):
        y = np.asarray(y)
        if self.n_classes is None:
            self.classes_, yi = np.unique(y, return_inverse=True)
        else:
            self.classes_, yi = np.arange(self.n_classes), y.astype(np.int64)
        self.table_ = chi2_liw(X, yi, self.top_k, len(self.classes_), self.min_freq)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "table_")
        return np.vstack([liw_predict(doc, self.table_) for doc in X]) if len(X) else \
            np.zeros((0, len(self.classes_)))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def init_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform in [-0.5/d, 0.5/d], padding row zero."""
    mat = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    mat[0] = 0.0
    return mat


def load_embeddings(path, vocab: Vocabulary, seed: int = 0) -> EmbeddingTable:
    """Read a GloVe-format text file; rows for words outside the file are random."""
    found: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            word, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise ValueError(f"{path}:{lineno}: dimension {len(vals)} != {dim}")
            if word in vocab:
                found[word] = np.asarray(vals, dtype=np.float64)
    if dim is None:
        raise ValueError(f"{path}: no embedding vectors")
    mat = init_embeddings(vocab, dim, np.random.default_rng(seed))
    for word, vec in found.items():
        i = vocab.index[word]
        if i != 0:
            mat[i] = vec
    return EmbeddingTable(vocab, mat)
