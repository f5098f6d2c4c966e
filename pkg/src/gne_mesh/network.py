"""Undirected communication graphs and their zero-row-sum mixing matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) references a node outside 0..{self.n - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise TopologyError(f"duplicate edge {key}")
            seen.add(key)
        if not self.is_connected():
            raise TopologyError(f"graph on {self.n} nodes is not connected")

    @classmethod
    def from_edges(cls, n: int, edges) -> "Topology":
        edges = [tuple(int(v) for v in e) for e in edges]
        norm = [(min(i, j), max(i, j)) for i, j in edges]
        if len(set(norm)) != len(norm):
            dup = next(e for e in norm if norm.count(e) > 1)
            raise TopologyError(f"duplicate edge {dup}")
        return cls(n, frozenset(norm))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n))
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1.0
        return adj

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        k, _ = connected_components(csr_matrix(self.adjacency()), directed=False)
        return k == 1

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency()[i])]

    def distances(self, source: int) -> np.ndarray:
        """Hop distance from ``source`` to every node (BFS)."""
        adj = self.adjacency()
        dist = np.full(self.n, -1)
        dist[source] = 0
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.flatnonzero(adj[u]):
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(int(v))
            frontier = nxt
        return dist


def build_ring(n: int) -> Topology:
    if n < 3:
        raise TopologyError(f"a ring needs at least 3 nodes, got {n}")
    return Topology(n, frozenset((min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)))


def build_complete(n: int) -> Topology:
    if n < 2:
        raise TopologyError(f"a complete graph needs at least 2 nodes, got {n}")
    return Topology(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


@dataclass(frozen=True)
class MixingMatrix:
    a: np.ndarray
    rho2: float

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def off_diagonal(self) -> np.ndarray:
        return self.a - np.diag(np.diag(self.a))

    @property
    def weighted_degree(self) -> np.ndarray:
        return -np.diag(self.a).copy()


def strict_weight(topo: Topology) -> float:
    """1 / (max degree + 1), the weight under which ||I + A - 11^T/N|| < 1 holds."""
    return 1.0 / (topo.degrees().max() + 1.0)


def mixing_matrix(topo: Topology, weight: float = 1.0) -> MixingMatrix:
    if not weight > 0:
        raise TopologyError(f"edge weight must be positive, got {weight}")
    if not topo.is_connected():
        raise TopologyError("mixing matrix requires a connected topology")
    a = topo.adjacency() * weight
    # diagonal set from the off-diagonal sum so every row sums to exactly zero
    np.fill_diagonal(a, -a.sum(axis=1))
    eig = np.linalg.eigvalsh(a)
    # A is negative semidefinite with a simple zero eigenvalue; the largest
    # remaining one sets the contraction rate
    rho2 = float(abs(np.sort(eig)[-2])) if topo.n > 1 else 0.0
    return MixingMatrix(a=a, rho2=rho2)


def contraction_norm(m: MixingMatrix, eta: float) -> float:
    n = m.n
    mat = np.eye(n) + eta * m.a - np.ones((n, n)) / n
    return float(np.linalg.norm(mat, 2))


def contraction_check(m: MixingMatrix, eta: float) -> bool:
    """||I + eta A - 11^T/N|| < 1 - eta |rho2|, up to 1e-12.

    The left side is max_j |1 + eta lambda_j| over the nonzero eigenvalues,
    so it can never drop strictly below 1 - eta |rho2|; the tolerance turns
    the test into "the slowest mode dominates".
    """
    if not eta > 0:
        raise TopologyError(f"eta must be positive, got {eta}")
    return contraction_norm(m, eta) < 1.0 - eta * m.rho2 + 1e-12


def first_contraction_index(m: MixingMatrix, eta_at, k_max: int = 1000) -> int | None:
    """Smallest k <= k_max from which contraction_check holds for every later k scanned."""
    first = None
    for k in range(k_max + 1):
        if contraction_check(m, eta_at(k)):
            if first is None:
                first = k
        else:
            first = None
    return first
