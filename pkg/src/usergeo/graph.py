"""Mention/follower matrices and their extended, symmetric weighted networks.

Internal users (the dataset) get dense indices ``0..n-1``; users that are only
mentioned or followed get external column indices ``0..m-n-1``. The extended
mention network is

    Y = (M + M^T) + (X_M X_M^T - diag(X_M X_M^T))

and the extended follower network is built the same way from a symmetrised,
binary follower matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .ingest import UserRecord

DEFAULT_CELEBRITY_THRESHOLD = 5


class NodeIndex:
    """Bijections between user ids and internal / external dense indices."""

    def __init__(self, internal: Iterable[str], external: Iterable[str] = ()):
        self.internal_ids: list[str] = list(internal)
        self.internal = {u: i for i, u in enumerate(self.internal_ids)}
        if len(self.internal) != len(self.internal_ids):
            raise ValueError("duplicate internal user id")
        ext = [e for e in external if e not in self.internal]
        self.external_ids: list[str] = sorted(set(ext))
        self.external = {u: i for i, u in enumerate(self.external_ids)}

    @classmethod
    def from_users(cls, users: Iterable[UserRecord]) -> "NodeIndex":
        users = list(users)
        internal = sorted(u.user_id for u in users)
        linked = set()
        for u in users:
            for t in u.tweets:
                linked.update(t.mentions)
            if u.followees:
                linked.update(u.followees)
        return cls(internal, linked)

    @property
    def n(self) -> int:
        return len(self.internal_ids)

    @property
    def m(self) -> int:
        return len(self.internal_ids) + len(self.external_ids)

    @property
    def n_external(self) -> int:
        return len(self.external_ids)

    def __contains__(self, user_id) -> bool:
        return user_id in self.internal


@dataclass(frozen=True)
class WeightedAdjacency:
    """Sparse weighted adjacency over ``n`` nodes, stored as canonical CSR."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"adjacency must be square, got {m.shape}")
        m.eliminate_zeros()
        m.sum_duplicates()
        m.sort_indices()
        if m.nnz and m.data.min() < 0:
            raise ValueError("negative edge weight")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_dense(cls, a) -> "WeightedAdjacency":
        return cls(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    @classmethod
    def from_edges(cls, n: int, edges: Mapping[tuple[int, int], float]) -> "WeightedAdjacency":
        if edges:
            (rows, cols), vals = zip(*edges.keys()), list(edges.values())
        else:
            rows, cols, vals = (), (), ()
        return cls(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def weight(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[lo:hi], self.matrix.data[lo:hi]

    def degree(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def weighted_degree(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self) -> bool:
        return (self.matrix != self.matrix.T).nnz == 0

    def has_self_loops(self) -> bool:
        return bool(np.any(self.matrix.diagonal() != 0))

    def row_normalized(self) -> sp.csr_matrix:
        """Rows divided by weighted degree; isolated rows stay zero."""
        deg = self.weighted_degree()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return sp.csr_matrix(sp.diags(inv) @ self.matrix)

    def subgraph(self, nodes) -> "WeightedAdjacency":
        nodes = np.asarray(nodes)
        return WeightedAdjacency(self.matrix[nodes][:, nodes])

    def __add__(self, other: "WeightedAdjacency") -> "WeightedAdjacency":
        return WeightedAdjacency(self.matrix + other.matrix)

    def __eq__(self, other):
        if not isinstance(other, WeightedAdjacency):
            return NotImplemented
        return self.matrix.shape == other.matrix.shape and (self.matrix != other.matrix).nnz == 0

    __hash__ = None


@dataclass(frozen=True)
class BipartiteIncidence:
    """Binary incidence from internal rows to external columns."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        m.eliminate_zeros()
        m.sum_duplicates()
        m.data[:] = 1.0
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class MultiplexGraph:
    """Several weighted layers over one shared node set."""

    n: int
    layers: dict[str, WeightedAdjacency] = field(default_factory=dict)

    @property
    def relations(self) -> list[str]:
        return list(self.layers)

    def __getitem__(self, name) -> WeightedAdjacency:
        return self.layers[name]

    def flatten(self) -> WeightedAdjacency:
        """Sum of all layers, for models that take a single graph."""
        total = sp.csr_matrix((self.n, self.n))
        for a in self.layers.values():
            total = total + a.matrix
        return WeightedAdjacency(total)


def build_mention_matrices(users: Iterable[UserRecord], index: NodeIndex
                           ) -> tuple[WeightedAdjacency, BipartiteIncidence]:
    """Directed mention counts among internal users, and binary mentions of externals."""
    n, ne = index.n, index.n_external
    internal: dict[tuple[int, int], int] = {}
    external: set[tuple[int, int]] = set()
    for u in users:
        i = index.internal[u.user_id]
        for t in u.tweets:
            for target in t.mentions:
                j = index.internal.get(target)
                if j is not None:
                    if j != i:
                        internal[(i, j)] = internal.get((i, j), 0) + 1
                else:
                    external.add((i, index.external[target]))
    M = WeightedAdjacency.from_edges(n, internal)
    return M, _incidence(n, ne, external)


def build_follower_matrices(users: Iterable[UserRecord], index: NodeIndex
                            ) -> tuple[WeightedAdjacency, BipartiteIncidence]:
    """Binary directed follow relations among internal users, and follows of externals."""
    n, ne = index.n, index.n_external
    internal: dict[tuple[int, int], int] = {}
    external: set[tuple[int, int]] = set()
    for u in users:
        i = index.internal[u.user_id]
        for target in u.followees or ():
            j = index.internal.get(target)
            if j is not None:
                if j != i:
                    internal[(i, j)] = 1
            else:
                external.add((i, index.external[target]))
    return WeightedAdjacency.from_edges(n, internal), _incidence(n, ne, external)


def _incidence(n: int, ne: int, pairs: set[tuple[int, int]]) -> BipartiteIncidence:
    if pairs:
        rows, cols = zip(*sorted(pairs))
    else:
        rows, cols = (), ()
    return BipartiteIncidence(sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, ne)))


def filter_popular(A: WeightedAdjacency, X: BipartiteIncidence,
                   threshold: float | None = DEFAULT_CELEBRITY_THRESHOLD
                   ) -> tuple[WeightedAdjacency, BipartiteIncidence]:
    """Zero every incoming link of nodes with more than ``threshold`` distinct in-linkers.

    Applies to internal targets (columns of ``A``) and external targets
    (columns of ``X``). Rows are left alone.
    """
    if threshold is None or math.isinf(threshold):
        return A, X
    if threshold < 1:
        raise ValueError("celebrity threshold must be >= 1")
    a = A.matrix.tocsc()
    a.setdiag(0)
    a.eliminate_zeros()
    keep_a = np.diff(a.indptr) <= threshold
    x = X.matrix.tocsc()
    keep_x = np.diff(x.indptr) <= threshold
    A2 = WeightedAdjacency(A.matrix @ sp.diags(keep_a.astype(float)))
    X2 = BipartiteIncidence(X.matrix @ sp.diags(keep_x.astype(float)))
    return A2, X2


def _co_links(X: BipartiteIncidence) -> sp.csr_matrix:
    co = sp.csr_matrix(X.matrix @ X.matrix.T)
    co.setdiag(0)
    co.eliminate_zeros()
    return co


def extend_mention_network(M: WeightedAdjacency, X: BipartiteIncidence) -> WeightedAdjacency:
    """Symmetrised mention counts plus co-mentions through external users."""
    if X.shape[0] != M.n:
        raise ValueError("incidence rows must match mention matrix size")
    sym = M.matrix + M.matrix.T
    sym.setdiag(0)
    return WeightedAdjacency(sym + _co_links(X))


def extend_follower_network(F: WeightedAdjacency, X: BipartiteIncidence) -> WeightedAdjacency:
    """Undirected follow relation (1 per linked pair) plus co-follow counts."""
    if X.shape[0] != F.n:
        raise ValueError("incidence rows must match follower matrix size")
    sym = (F.matrix + F.matrix.T).tocsr()
    sym.setdiag(0)
    sym.eliminate_zeros()
    sym.data[:] = 1.0
    return WeightedAdjacency(sym + _co_links(X))


def assemble_multiplex(layers: Mapping[str, WeightedAdjacency]) -> MultiplexGraph:
    if not layers:
        raise ValueError("multiplex needs at least one layer")
    sizes = {name: a.n for name, a in layers.items()}
    if len(set(sizes.values())) != 1:
        raise ValueError(f"layer node counts differ: {sizes}")
    return MultiplexGraph(next(iter(sizes.values())), dict(layers))


def build_multiplex(users: list[UserRecord], index: NodeIndex | None = None,
                    celebrity_threshold: float | None = DEFAULT_CELEBRITY_THRESHOLD,
                    use_follower_layer: bool = True) -> tuple[NodeIndex, MultiplexGraph]:
    """Full construction: matrices, popularity filter, extension, multiplex."""
    index = index or NodeIndex.from_users(users)
    M, XM = filter_popular(*build_mention_matrices(users, index), celebrity_threshold)
    layers = {"mention": extend_mention_network(M, XM)}
    if use_follower_layer and any(u.followees is not None for u in users):
        F, XF = filter_popular(*build_follower_matrices(users, index), celebrity_threshold)
        layers["follower"] = extend_follower_network(F, XF)
    return index, assemble_multiplex(layers)


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def save_multiplex(graph: MultiplexGraph, index_ids: list[str], edges_path, nodes_path,
                   header: str | None = None) -> None:
    """Write ``layer\\tsrc\\tdst\\tweight`` rows and an ``idx\\tuser_id`` sidecar."""
    if len(index_ids) != graph.n:
        raise ValueError("node id list does not match graph size")
    with open(edges_path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write(f"# layers={','.join(graph.layers)}\n")
        for name, a in graph.layers.items():
            coo = a.matrix.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for k in order:
                fh.write(f"{name}\t{coo.row[k]}\t{coo.col[k]}\t{_fmt_weight(coo.data[k])}\n")
    with open(nodes_path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for i, uid in enumerate(index_ids):
            fh.write(f"{i}\t{uid}\n")


def load_multiplex(edges_path, nodes_path, layer_order: list[str] | None = None
                   ) -> tuple[list[str], MultiplexGraph]:
    ids: list[str] = []
    with open(nodes_path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            idx, uid = line.rstrip("\n").split("\t", 1)
            if int(idx) != len(ids):
                raise ValueError(f"node sidecar out of order at index {idx}")
            ids.append(uid)
    n = len(ids)
    edges: dict[str, dict[tuple[int, int], float]] = {}
    declared: list[str] = []
    with open(edges_path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# layers="):
                declared = [s for s in line.strip()[len("# layers="):].split(",") if s]
                continue
            if line.startswith("#") or not line.strip():
                continue
            name, i, j, w = line.rstrip("\n").split("\t")
            edges.setdefault(name, {})[(int(i), int(j))] = float(w)
    names = layer_order or declared or list(edges)
    layers = {name: WeightedAdjacency.from_edges(n, edges.get(name, {})) for name in names}
    return ids, assemble_multiplex(layers)
