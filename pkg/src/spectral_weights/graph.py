"""Undirected graphs and the Laplacian constructions used throughout the package.

Node indices are 0-based internally; the edge-list text format uses 1-based
indices to match the numbering of the published 7-node topology.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Edge list of the 7-node benchmark topology (1-based, file order).
PAPER7_EDGES = (
    (1, 4), (4, 7), (7, 2), (2, 5), (5, 3), (1, 6),
    (6, 2), (4, 3), (3, 6), (6, 7), (2, 4), (4, 6),
)


class GraphError(ValueError):
    """Invalid or unsupported graph input."""


@dataclass(frozen=True)
class Graph:
    """Connected, simple, undirected graph.

    ``edges`` keeps the input order with each pair stored as ``(i, j)``,
    ``i < j``; edge-weight vectors are indexed in this order.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nbrs: list[set[int]] = [set() for _ in range(self.n)]
        seen = set()
        for k, (i, j) in enumerate(self.edges):
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge {k}: node index out of range")
            if i == j:
                raise GraphError(f"edge {k}: self-loop at node {i}")
            if i > j:
                raise GraphError(f"edge {k}: expected i < j, got ({i}, {j})")
            if (i, j) in seen:
                raise GraphError(f"edge {k}: duplicate edge ({i}, {j})")
            seen.add((i, j))
            nbrs[i].add(j)
            nbrs[j].add(i)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(s)) for s in nbrs))
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        if not is_connected(self):
            raise GraphError("graph is not connected")

    @classmethod
    def from_edges(cls, n: int, edges, one_based: bool = False) -> "Graph":
        off = 1 if one_based else 0
        norm = []
        for i, j in edges:
            i, j = int(i) - off, int(j) - off
            norm.append((i, j) if i < j else (j, i))
        return cls(n, tuple(norm))

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency])

    def edge_index(self) -> dict[tuple[int, int], int]:
        """Map each unordered pair (both orientations) to its edge position."""
        idx = {}
        for k, (i, j) in enumerate(self.edges):
            idx[(i, j)] = k
            idx[(j, i)] = k
        return idx


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return False
    return len(_bfs_dist(g, 0)) == g.n


def parse_graph(text: str) -> Graph:
    """Parse an edge-list document: a header ``N M`` then ``M`` lines ``i j`` (1-based)."""
    lines = [(k + 1, ln.split("#", 1)[0].strip()) for k, ln in enumerate(text.splitlines())]
    lines = [(k, ln) for k, ln in lines if ln]
    if not lines:
        raise GraphError("empty graph document")
    lineno, header = lines[0]
    try:
        n, m = (int(tok) for tok in header.split())
    except ValueError:
        raise GraphError(f"line {lineno}: expected header 'N M', got {header!r}") from None
    if n < 1 or m < 0:
        raise GraphError(f"line {lineno}: invalid header {header!r}")
    body = lines[1:]
    if len(body) != m:
        raise GraphError(f"header declares {m} edges but {len(body)} edge lines follow")

    edges = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, ln in body:
        toks = ln.split()
        if len(toks) != 2:
            raise GraphError(f"line {lineno}: expected 'i j', got {ln!r}")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer node index in {ln!r}") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"line {lineno}: node index out of range 1..{n} in {ln!r}")
        if i == j:
            raise GraphError(f"line {lineno}: self-loop at node {i}")
        key = (min(i, j) - 1, max(i, j) - 1)
        if key in seen:
            raise GraphError(f"line {lineno}: duplicate edge {i}-{j} (first on line {seen[key]})")
        seen[key] = lineno
        edges.append(key)
    try:
        return Graph(n, tuple(edges))
    except GraphError as exc:
        raise GraphError(f"line {lineno}: {exc}") from None


def load_graph(path) -> Graph:
    return parse_graph(Path(path).read_text())


def format_graph(g: Graph) -> str:
    out = [f"{g.n} {g.m}"] + [f"{i + 1} {j + 1}" for i, j in g.edges]
    return "\n".join(out) + "\n"


def paper7() -> Graph:
    """The 7-node, 12-edge benchmark topology."""
    return Graph.from_edges(7, PAPER7_EDGES, one_based=True)


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(n: int) -> Graph:
    """Star with centre 0 and ``n - 1`` leaves."""
    return Graph(n, tuple((0, j) for j in range(1, n)))


def random_connected_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus independent extra edges with probability ``p``."""
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < p:
                edges.add((i, j))
    return Graph(n, tuple(sorted(edges)))


# -- matrices ----------------------------------------------------------------

def _check_len(w, size, what):
    w = np.asarray(w, dtype=float)
    if w.shape != (size,):
        raise ValueError(f"{what} must have length {size}, got shape {w.shape}")
    return w


def adjacency_matrix(g: Graph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    for i, j in g.edges:
        A[i, j] = A[j, i] = 1.0
    return A


def laplacian(g: Graph) -> np.ndarray:
    A = adjacency_matrix(g)
    return np.diag(A.sum(axis=1)) - A


def node_weighted_laplacian(g: Graph, w) -> np.ndarray:
    """``diag(w) @ L``; generally asymmetric."""
    w = _check_len(w, g.n, "node weights")
    return w[:, None] * laplacian(g)


def symmetric_weighted_laplacian(g: Graph, w) -> np.ndarray:
    """``diag(w)^½ L diag(w)^½``, similar to the node-weighted Laplacian."""
    w = _check_len(w, g.n, "node weights")
    if np.any(w < 0):
        raise ValueError("node weights must be non-negative")
    s = np.sqrt(w)
    return s[:, None] * laplacian(g) * s[None, :]


def incidence(g: Graph) -> np.ndarray:
    B = np.zeros((g.m, g.n))
    for k, (i, j) in enumerate(g.edges):
        B[k, i] = 1.0
        B[k, j] = -1.0
    return B


def edge_weighted_laplacian(g: Graph, w) -> np.ndarray:
    """``B.T @ diag(w) @ B``."""
    w = _check_len(w, g.m, "edge weights")
    B = incidence(g)
    return B.T @ (w[:, None] * B)


def weighted_operator(g: Graph, w=None, kind: str = "node") -> np.ndarray:
    """Symmetric matrix whose spectrum defines the condition number for ``kind``."""
    if kind == "node":
        return laplacian(g) if w is None else symmetric_weighted_laplacian(g, w)
    if kind == "edge":
        return laplacian(g) if w is None else edge_weighted_laplacian(g, w)
    raise ValueError(f"unknown weight kind {kind!r}")


# -- distances ---------------------------------------------------------------

def _bfs_dist(g: Graph, src: int) -> dict[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def eccentricity(g: Graph, i: int) -> int:
    return max(_bfs_dist(g, i).values())


def bfs_diameter(g: Graph) -> int:
    """Exact diameter by BFS from every node."""
    return max(eccentricity(g, i) for i in range(g.n))
