"""Pattern graphs and non-induced copy counting.

A copy of a pattern G0 in a graph is an edge-preserving injection modulo
the automorphisms of G0, so

    copies = embeddings / |Aut(G0)|.

Embeddings are enumerated by backtracking over neighbour lists (compiled
kernel when available). Rooted counts (copies through a given node, or a
given pair of nodes) pin pattern vertices instead of recounting the graph.
"""
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, permutations

import numpy as np

from . import kernels


@dataclass(frozen=True)
class PatternGraph:
    n_vertices: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            a, b = (int(v) for v in e)
            if a == b:
                raise ValueError("pattern graphs have no self-loops")
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices):
                raise ValueError(f"edge {e} out of range for {self.n_vertices} vertices")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n_vertices, edges):
        return cls(int(n_vertices), frozenset(tuple(e) for e in edges))

    @classmethod
    def named(cls, name):
        try:
            return NAMED_PATTERNS[name]
        except KeyError:
            raise ValueError(f"unknown pattern {name!r}; choose from {sorted(NAMED_PATTERNS)}") from None

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def adjacency(self):
        a = np.zeros((self.n_vertices, self.n_vertices), dtype=np.uint8)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def is_connected(self):
        if self.n_vertices == 0:
            return False
        seen = {0}
        stack = [0]
        adj = self.adjacency
        while stack:
            v = stack.pop()
            for u in np.flatnonzero(adj[v]):
                if u not in seen:
                    seen.add(int(u))
                    stack.append(int(u))
        return len(seen) == self.n_vertices

    @cached_property
    def automorphisms(self):
        """Number of vertex permutations preserving the edge set."""
        count = 0
        for perm in permutations(range(self.n_vertices)):
            if all((min(perm[a], perm[b]), max(perm[a], perm[b])) in self.edges for a, b in self.edges):
                count += 1
        return count


NAMED_PATTERNS = {
    "point": PatternGraph(1, frozenset()),
    "edge": PatternGraph(2, frozenset({(0, 1)})),
    "path3": PatternGraph(3, frozenset({(0, 1), (1, 2)})),
    "triangle": PatternGraph(3, frozenset({(0, 1), (0, 2), (1, 2)})),
    "star3": PatternGraph(4, frozenset({(0, 1), (0, 2), (0, 3)})),
    "square": PatternGraph(4, frozenset({(0, 1), (1, 2), (2, 3), (0, 3)})),
    "k4": PatternGraph(4, frozenset(combinations(range(4), 2))),
}


@dataclass
class Graph:
    """Simple undirected graph in dense + CSR form."""

    adj: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, n_nodes, pairs):
        adj = np.zeros((n_nodes, n_nodes), dtype=np.uint8)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            adj[pairs[:, 0], pairs[:, 1]] = 1
            adj[pairs[:, 1], pairs[:, 0]] = 1
        np.fill_diagonal(adj, 0)
        return cls.from_adjacency(adj)

    @classmethod
    def from_adjacency(cls, adj):
        adj = np.ascontiguousarray(adj, dtype=np.uint8)
        rows, cols = np.nonzero(adj)
        indptr = np.zeros(adj.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=adj.shape[0]), out=indptr[1:])
        return cls(adj, indptr, np.ascontiguousarray(cols, dtype=np.int64))

    @property
    def n_nodes(self):
        return self.adj.shape[0]

    @property
    def n_edges(self):
        return int(self.indices.size // 2)


def _plan(pattern, pinned):
    """Visiting order with pinned vertices first, then BFS; anchor = earlier neighbour."""
    q = pattern.n_vertices
    adj = pattern.adjacency
    order = list(pinned)
    placed = set(order)
    while len(order) < q:
        frontier = [v for v in range(q) if v not in placed and any(adj[v, u] for u in placed)]
        nxt = frontier[0] if frontier else min(v for v in range(q) if v not in placed)
        order.append(nxt)
        placed.add(nxt)
    anchor = []
    for i, v in enumerate(order):
        prev = [u for u in order[:i] if adj[u, v]]
        anchor.append(prev[0] if prev and v not in pinned else -1)
    return np.array(order, dtype=np.int64), np.array(anchor, dtype=np.int64)


def count_embeddings(graph, pattern, fixed=None):
    """Edge-preserving injections; ``fixed`` maps pattern vertex -> graph node."""
    fixed = dict(fixed or {})
    if pattern.n_vertices > graph.n_nodes:
        return 0
    pins = np.full(pattern.n_vertices, -1, dtype=np.int64)
    for v, node in fixed.items():
        pins[v] = node
    order, anchor = _plan(pattern, list(fixed))
    return kernels.count_embeddings(
        graph.adj, graph.indptr, graph.indices, pattern.adjacency, order, anchor, pins
    )


def count_copies(graph, pattern):
    """Non-induced copies of ``pattern`` (each unordered copy once)."""
    if pattern.n_vertices == 1:
        return graph.n_nodes
    if pattern == NAMED_PATTERNS["edge"]:
        return graph.n_edges
    return count_embeddings(graph, pattern) // pattern.automorphisms


def copies_through(graph, pattern, node):
    """Copies that use ``node``."""
    total = sum(count_embeddings(graph, pattern, {v: node}) for v in range(pattern.n_vertices))
    return total // pattern.automorphisms


def copies_through_pair(graph, pattern, a, b):
    """Copies that use both ``a`` and ``b``."""
    if a == b:
        raise ValueError("nodes must differ")
    q = pattern.n_vertices
    total = sum(
        count_embeddings(graph, pattern, {v: a, w: b})
        for v in range(q)
        for w in range(q)
        if v != w
    )
    return total // pattern.automorphisms
