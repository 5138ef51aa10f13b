"""Canonical graph representation shared by every stage of the pipeline.

Graphs are simple and undirected. Edges are stored once, as ``(i, j)`` with
``i < j``; the adjacency matrix is derived on demand.
"""
from __future__ import annotations

from dataclasses import dataclass
from hashlib import blake2b
from typing import Iterable, Optional, Sequence

import numpy as np


class GraphValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray
    label: int

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_array(self) -> np.ndarray:
        """Return the edges as an ``(m, 2)`` int64 array."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.float64)
        e = self.edge_array()
        a[e[:, 0], e[:, 1]] = 1.0
        a[e[:, 1], e[:, 0]] = 1.0
        return a

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.label == other.label
            and self.edges == other.edges
            and self.features.shape == other.features.shape
            and bool(np.array_equal(self.features, other.features))
        )

    def __hash__(self):
        return hash((self.n, self.label, self.edges))

    def __repr__(self):
        return (
            f"Graph(n={self.n}, num_edges={self.num_edges}, "
            f"feature_dim={self.features.shape[1]}, label={self.label})"
        )


@dataclass(frozen=True)
class DenseGraph:
    """Zero-padded dense form used for batched critic input."""

    adjacency: np.ndarray
    features: np.ndarray
    mask: np.ndarray
    label: int

    @property
    def n(self) -> int:
        return int(self.mask.sum())

    def edges(self) -> set[tuple[int, int]]:
        """Re-extract the undirected edge set among the real (unmasked) nodes."""
        n = self.n
        rows, cols = np.nonzero(np.triu(self.adjacency[:n, :n], k=1))
        return {(int(i), int(j)) for i, j in zip(rows, cols)}


def new_graph(n: int, edges: Iterable[Sequence[int]], features, label: int) -> Graph:
    """Build a validated :class:`Graph`.

    Directed duplicates such as ``(0, 1)`` and ``(1, 0)`` collapse to one
    undirected edge. Raises :class:`GraphValidationError` on out-of-range
    endpoints, self-loops, non-finite features or a feature row-count mismatch.
    """
    n = int(n)
    if n < 1:
        raise GraphValidationError(f"node count must be >= 1, got {n}")
    feats = np.array(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats.reshape(-1, 1)
    if feats.ndim != 2 or feats.shape[0] != n:
        raise GraphValidationError(
            f"feature matrix has {feats.shape[0] if feats.ndim else 0} rows, expected {n}"
        )
    if not np.all(np.isfinite(feats)):
        raise GraphValidationError("feature matrix contains non-finite values")

    canon = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n):
            raise GraphValidationError(f"endpoint out of range in edge ({i}, {j}) for n={n}")
        if i == j:
            raise GraphValidationError(f"self-loop at node {i}")
        canon.add((i, j) if i < j else (j, i))

    feats.setflags(write=False)
    return Graph(n=n, edges=tuple(sorted(canon)), features=feats, label=int(label))


def degree_sequence(g: Graph) -> list[int]:
    deg = np.zeros(g.n, dtype=np.int64)
    e = g.edge_array()
    np.add.at(deg, e[:, 0], 1)
    np.add.at(deg, e[:, 1], 1)
    return deg.tolist()


def to_dense(g: Graph, n_pad: int) -> DenseGraph:
    if n_pad < g.n:
        raise GraphValidationError(f"n_pad={n_pad} is smaller than the graph size {g.n}")
    adj = np.zeros((n_pad, n_pad), dtype=np.float64)
    adj[: g.n, : g.n] = g.adjacency()
    feats = np.zeros((n_pad, g.features.shape[1]), dtype=np.float64)
    feats[: g.n] = g.features
    mask = np.zeros(n_pad, dtype=np.float64)
    mask[: g.n] = 1.0
    return DenseGraph(adjacency=adj, features=feats, mask=mask, label=g.label)


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes so that old node ``i`` becomes node ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise GraphValidationError(f"not a permutation of range({g.n}): {perm.tolist()}")
    feats = np.empty_like(g.features)
    feats[perm] = g.features
    edges = [(int(perm[i]), int(perm[j])) for i, j in g.edges]
    return new_graph(g.n, edges, feats, g.label)


def is_one_hot(features: np.ndarray) -> bool:
    """True when every row holds a single 1 and zeros elsewhere."""
    if features.size == 0:
        return False
    ones = features == 1.0
    return bool(np.all(ones | (features == 0.0)) and np.all(ones.sum(axis=1) == 1))


def default_node_labels(g: Graph) -> list[int]:
    """Argmax of one-hot features, otherwise a uniform label."""
    if is_one_hot(g.features):
        return np.argmax(g.features, axis=1).tolist()
    return [0] * g.n


def _digest(text: str) -> str:
    return blake2b(text.encode("ascii"), digest_size=16).hexdigest()


def wl_hash(g: Graph, iterations: int = 3, init_labels: Optional[Sequence] = None) -> str:
    """Weisfeiler-Lehman graph digest, invariant to node relabeling.

    ``init_labels`` defaults to :func:`default_node_labels`; pass ``"uniform"``
    to hash structure only.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if init_labels is None:
        labels = [str(x) for x in default_node_labels(g)]
    elif isinstance(init_labels, str) and init_labels == "uniform":
        labels = ["0"] * g.n
    else:
        if len(init_labels) != g.n:
            raise ValueError(f"expected {g.n} initial labels, got {len(init_labels)}")
        labels = [str(x) for x in init_labels]

    nbrs: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in g.edges:
        nbrs[i].append(j)
        nbrs[j].append(i)

    rounds = [",".join(sorted(labels))]
    for _ in range(iterations):
        labels = [
            _digest(labels[v] + "|" + ",".join(sorted(labels[u] for u in nbrs[v])))
            for v in range(g.n)
        ]
        rounds.append(",".join(sorted(labels)))
    return _digest(f"n={g.n};m={g.num_edges};" + ";".join(rounds))
