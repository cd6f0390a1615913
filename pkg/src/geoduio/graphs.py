"""Undirected communication graphs and their Laplacians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CONNECTIVITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CommGraph:
    n_nodes: int
    adjacency: np.ndarray
    laplacian: np.ndarray
    lap_eigs: np.ndarray

    @classmethod
    def from_adjacency(cls, adjacency):
        adj = np.asarray(adjacency, dtype=float)
        n = adj.shape[0]
        if adj.shape != (n, n) or not np.allclose(adj, adj.T):
            raise ConfigError("adjacency must be square and symmetric")
        if np.any(np.diag(adj) != 0):
            raise ConfigError("adjacency must have a zero diagonal")
        lap = np.diag(adj.sum(axis=1)) - adj
        eigs = np.sort(np.linalg.eigvalsh(lap))
        eigs[0] = 0.0 if abs(eigs[0]) < CONNECTIVITY_TOL * max(1.0, n) else eigs[0]
        for m in (adj, lap, eigs):
            m.setflags(write=False)
        return cls(n, adj, lap, eigs)

    @property
    def lambda2(self):
        return float(self.lap_eigs[1]) if self.n_nodes > 1 else 0.0

    @property
    def lambda_max(self):
        return float(self.lap_eigs[-1])

    def is_connected(self):
        return self.n_nodes == 1 or self.lambda2 > CONNECTIVITY_TOL * self.n_nodes

    def is_complete(self):
        n = self.n_nodes
        return int(self.adjacency.sum()) == n * (n - 1)

    def edges(self):
        i, j = np.nonzero(np.triu(self.adjacency))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def with_edge(self, i, j):
        adj = self.adjacency.copy()
        adj[i, j] = adj[j, i] = 1.0
        return CommGraph.from_adjacency(adj)


def laplacian_from_edges(n, edges):
    """Graph on nodes ``0..n-1`` with unit-weight undirected ``edges``."""
    adj = np.zeros((n, n))
    for i, j in edges:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ConfigError(f"bad edge ({i}, {j}) for {n} nodes")
        adj[i, j] = adj[j, i] = 1.0
    return CommGraph.from_adjacency(adj)


def ring_edges(n):
    if n < 2:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def path_edges(n):
    return [(i, i + 1) for i in range(n - 1)]


def complete_edges(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]
