"""Undirected graphs, per-node neighbourhood sets, and their aggregation.

Vertices are dense integer indices ``0..p-1``; every edge is stored once in
canonical ``(min, max)`` form. External string names live in the CLI layer
only.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .errors import InvalidInputError

RULES = ("and", "or")


def _check_rule(rule: str) -> str:
    if rule not in RULES:
        raise InvalidInputError(f"rule must be one of {RULES}, got {rule!r}")
    return rule


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on ``p`` vertices.

    ``edges`` holds canonical ``(u, v)`` tuples with ``u < v``; no self loops.
    Immutable after construction and safe to share across threads.
    """

    p: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.p < 1:
            raise InvalidInputError(f"vertex count must be positive, got {self.p}")
        for u, v in self.edges:
            if not (0 <= u < v < self.p):
                raise InvalidInputError(
                    f"edge ({u}, {v}) is not canonical for p={self.p}"
                )

    @classmethod
    def from_edges(cls, p: int, pairs: Iterable[tuple[int, int]]) -> "Graph":
        """Build a graph from arbitrary vertex pairs, normalizing order."""
        edges = set()
        for u, v in pairs:
            if u == v:
                raise InvalidInputError(f"self loop on vertex {u}")
            edges.add((u, v) if u < v else (v, u))
        return cls(p=p, edges=frozenset(edges))

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self.edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def degrees(self) -> list[int]:
        deg = [0] * self.p
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


@dataclass(frozen=True)
class NeighbourhoodSet:
    """The claimed neighbourhood of one target vertex."""

    target: int
    members: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if self.target in self.members:
            raise InvalidInputError(
                f"vertex {self.target} cannot be its own neighbour"
            )


@dataclass(frozen=True)
class Confusion:
    """Edge-recovery counts over all p(p-1)/2 unordered vertex pairs."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def combine(neighbourhoods: list[NeighbourhoodSet], rule: str) -> Graph:
    """Merge per-node neighbourhood claims into an undirected graph.

    Under ``"and"`` an edge {u, v} requires both claims u in N_v and v in N_u;
    under ``"or"`` one claim suffices.
    """
    _check_rule(rule)
    p = len(neighbourhoods)
    targets = [ns.target for ns in neighbourhoods]
    if sorted(targets) != list(range(p)):
        raise InvalidInputError(
            f"need exactly one neighbourhood per vertex 0..{p - 1}, got targets {sorted(targets)}"
        )
    claims: Counter[tuple[int, int]] = Counter()
    for ns in neighbourhoods:
        for u in ns.members:
            if not 0 <= u < p:
                raise InvalidInputError(
                    f"neighbourhood of {ns.target} contains out-of-range vertex {u}"
                )
            claims[(min(u, ns.target), max(u, ns.target))] += 1
    needed = 2 if rule == "and" else 1
    edges = frozenset(pair for pair, n in claims.items() if n >= needed)
    return Graph(p=p, edges=edges)


def graph_diff(estimate: Graph, truth: Graph) -> Confusion:
    """Confusion counts of an estimated edge set against the ground truth."""
    if estimate.p != truth.p:
        raise InvalidInputError(
            f"vertex counts differ: estimate has {estimate.p}, truth has {truth.p}"
        )
    tp = len(estimate.edges & truth.edges)
    fp = len(estimate.edges - truth.edges)
    fn = len(truth.edges - estimate.edges)
    total = estimate.p * (estimate.p - 1) // 2
    return Confusion(tp=tp, fp=fp, fn=fn, tn=total - tp - fp - fn)
