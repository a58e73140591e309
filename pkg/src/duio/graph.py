"""Undirected, unweighted communication topology."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from duio.errors import InvalidScenario


@dataclass(frozen=True)
class CommGraph:
    """Nodes are numbered ``0 .. node_count - 1``; edges are unordered pairs.

    Files and reports use 1-based node numbers, the library does not.
    """

    node_count: int
    edges: frozenset

    def __init__(self, node_count: int, edges=()):
        if node_count < 1:
            raise InvalidScenario("graph needs at least one node")
        normalized = set()
        for edge in edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise InvalidScenario(f"self-loop on node {i}")
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise InvalidScenario(f"edge ({i}, {j}) outside 0..{node_count - 1}")
            pair = (min(i, j), max(i, j))
            if pair in normalized:
                raise InvalidScenario(f"duplicate edge {pair}")
            normalized.add(pair)
        object.__setattr__(self, "node_count", int(node_count))
        object.__setattr__(self, "edges", frozenset(normalized))

    @classmethod
    def ring(cls, m: int) -> "CommGraph":
        if m < 3:
            return cls(m, [(0, 1)] if m == 2 else [])
        return cls(m, [(i, (i + 1) % m) for i in range(m)])

    def neighbors(self, i: int) -> list[int]:
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def adjacency(g: CommGraph) -> np.ndarray:
    A = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        A[i, j] = A[j, i] = 1.0
    return A


def laplacian(g: CommGraph) -> np.ndarray:
    A = adjacency(g)
    return np.diag(A.sum(axis=1)) - A


def connected_components(g: CommGraph) -> list[set[int]]:
    """Maximal connected node sets, ordered by their smallest member."""
    _, labels = csgraph.connected_components(adjacency(g), directed=False)
    groups: dict[int, set[int]] = {}
    for node, label in enumerate(labels):
        groups.setdefault(int(label), set()).add(node)
    return sorted(groups.values(), key=min)
