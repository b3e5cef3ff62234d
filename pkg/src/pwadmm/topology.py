"""Random connected networks and the matrices built on top of them."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from pwadmm.rng import as_generator


@dataclass(frozen=True)
class Network:
    """Undirected simple graph over agents ``0..n_agents-1``.

    ``edges`` holds sorted ``(i, j)`` pairs with ``i < j``; ``adjacency[i]``
    is the sorted neighbor tuple of agent ``i`` (self excluded).
    """

    n_agents: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    @classmethod
    def from_edges(cls, n_agents: int, edges) -> Network:
        if n_agents < 1:
            raise ValueError("a network needs at least one agent")
        seen = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-edge at agent {a}")
            if not (0 <= a < n_agents and 0 <= b < n_agents):
                raise ValueError(f"edge ({a}, {b}) out of range for {n_agents} agents")
            e = (min(a, b), max(a, b))
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
        nbrs: list[list[int]] = [[] for _ in range(n_agents)]
        for a, b in seen:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return cls(
            n_agents=n_agents,
            edges=tuple(sorted(seen)),
            adjacency=tuple(tuple(sorted(v)) for v in nbrs),
        )

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(v) for v in self.adjacency], dtype=int)

    def closure(self, i: int) -> tuple[int, ...]:
        """Neighbors of ``i`` plus ``i`` itself, sorted."""
        return tuple(sorted((*self.adjacency[i], i)))

    def is_connected(self) -> bool:
        parent = list(range(self.n_agents))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        components = self.n_agents
        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
                components -= 1
        return components == 1

    def to_csv(self, path) -> None:
        """Write the edge list as ``src,dst`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "dst"])
            w.writerows(self.edges)

    @classmethod
    def from_csv(cls, path, n_agents: int) -> Network:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls.from_edges(n_agents, [(int(r["src"]), int(r["dst"])) for r in rows])


def target_edge_count(n_agents: int, density: float) -> int:
    # half-up rounding; Python's round() is banker's rounding
    return int(math.floor(n_agents * (n_agents - 1) / 2 * density + 0.5))


def _prufer_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniformly random labelled spanning tree on ``n`` nodes via a Prüfer sequence."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2).tolist()
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    tree = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        tree.append((min(leaf, v), max(leaf, v)))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    a, b = heapq.heappop(leaves), heapq.heappop(leaves)
    tree.append((a, b))
    return tree


def generate_network(n_agents: int, density: float, seed: int | np.random.Generator) -> Network:
    """Random connected graph with ``round(N(N-1)/2 * density)`` edges.

    A uniform random spanning tree guarantees connectivity; the remaining
    edges are drawn uniformly without replacement from the non-tree pairs.

    Parameters
    ----------
    n_agents : int
        Number of agents N.
    density : float
        Edge density in (0, 1].
    seed : int or numpy.random.Generator
        Seed (expanded into the ``graph`` stream) or a ready generator.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be positive")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    m = target_edge_count(n_agents, density)
    if m < n_agents - 1:
        raise ValueError(
            f"density {density} gives {m} edges for {n_agents} agents; "
            f"a connected graph needs at least {n_agents - 1}"
        )
    rng = as_generator(seed, "graph")
    tree = _prufer_tree(n_agents, rng)
    extra = m - len(tree)
    edges = set(tree)
    if extra > 0:
        iu, ju = np.triu_indices(n_agents, k=1)
        in_tree = np.zeros((n_agents, n_agents), dtype=bool)
        for a, b in tree:
            in_tree[a, b] = True
        free = np.flatnonzero(~in_tree[iu, ju])
        pick = rng.choice(free.size, size=extra, replace=False)
        for p in np.sort(free[pick]):
            edges.add((int(iu[p]), int(ju[p])))
    return Network.from_edges(n_agents, edges)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix stored densely, with per-row sampling tables."""

    matrix: np.ndarray

    def __post_init__(self):
        P = self.matrix
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(P < 0):
            raise ValueError("transition matrix has negative entries")
        if not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("transition matrix rows must sum to 1")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _tables(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        support, cdf = [], []
        for row in self.matrix:
            s = np.flatnonzero(row)
            support.append(s)
            cdf.append(np.cumsum(row[s]))
        return support, cdf

    def support(self, i: int) -> np.ndarray:
        return self._tables[0][i]

    def cdf(self, i: int) -> np.ndarray:
        return self._tables[1][i]


def build_transition_matrix(net: Network, allow_self_loop: bool = True) -> TransitionMatrix:
    """Uniform random-walk transitions over the closure of each agent.

    With ``allow_self_loop=False`` the uniform distribution is over the
    strict neighborhood instead.
    """
    N = net.n_agents
    P = np.zeros((N, N))
    for i in range(N):
        targets = net.closure(i) if allow_self_loop else net.adjacency[i]
        if not targets:
            raise ValueError(f"agent {i} has no neighbors and self-loops are disabled")
        P[i, list(targets)] = 1.0 / len(targets)
    return TransitionMatrix(P)


def build_mixing_matrix(net: Network) -> TransitionMatrix:
    """Symmetric doubly-stochastic Metropolis weights."""
    N = net.n_agents
    deg = net.degrees
    W = np.zeros((N, N))
    for a, b in net.edges:
        w = 1.0 / (1.0 + max(deg[a], deg[b]))
        W[a, b] = W[b, a] = w
    W[np.diag_indices(N)] = 1.0 - W.sum(axis=1)
    return TransitionMatrix(W)
