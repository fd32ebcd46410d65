"""Per-round communication graph: similarity-gated edges, cycle removal, schedule.

An edge ``m -> n`` means agent ``n`` reads agent ``m``'s response.  Cycles
are broken by cutting, inside each detected cycle, the edge that runs from
the weakest (lowest-psi) end towards the strongest, so information keeps
flowing downstream from high-contribution agents.  The visiting order is a
topological sort that prefers higher psi whenever several nodes are ready.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embedding import stack
from .errors import ZeroVectorError
from .valuation import ContributionScores

EDGE_RULES = ("alg2", "prose")

Edge = tuple[int, int]


@dataclass(frozen=True)
class SimilarityMatrix:
    S: np.ndarray
    round: int = 0

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def min_offdiag(self) -> float:
        """Weakest pairwise agreement; 1.0 when there are no pairs."""
        n = self.n
        if n < 2:
            return 1.0
        mask = ~np.eye(n, dtype=bool)
        return float(self.S[mask].min())


@dataclass(frozen=True)
class CommGraph:
    n: int
    edges: frozenset[Edge]
    topo_order: tuple[int, ...]
    removed_edges: tuple[Edge, ...] = ()
    psi: tuple[float, ...] = field(default=(), repr=False)
    round: int = 0

    @property
    def adjacency(self) -> np.ndarray:
        """``A[n, m] = True`` iff edge ``m -> n`` exists."""
        a = np.zeros((self.n, self.n), dtype=bool)
        for src, dst in self.edges:
            a[dst, src] = True
        return a

    def sources(self, node: int) -> list[int]:
        return sorted(src for src, dst in self.edges if dst == node)

    def in_degree(self, node: int) -> int:
        return sum(1 for _, dst in self.edges if dst == node)

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "edges": [list(e) for e in sorted(self.edges)],
            "removed": [list(e) for e in self.removed_edges],
            "order": list(self.topo_order),
            "psi": [float(p) for p in self.psi],
        }


def similarity_matrix(rs, round: int = 0) -> SimilarityMatrix:
    rs = stack(rs)
    norms = np.linalg.norm(rs, axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroVectorError("similarity undefined for a zero embedding")
    unit = rs / norms[:, None]
    S = np.clip(unit @ unit.T, -1.0, 1.0)
    S = (S + S.T) / 2.0
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S=S, round=round)


def candidate_edges(sim: SimilarityMatrix, psi: Sequence[float], tau: float, k: int | None = None,
                    edge_rule: str = "alg2") -> set[Edge]:
    """Incoming candidates per node before cycle removal.

    Node ``n`` listens to every ``m != n`` with ``S[n, m] >= tau``; with ``k``
    only its ``k`` most similar such peers (ties to the lower index).  The
    ``prose`` rule additionally demands ``psi[m] > psi[n]``.
    """
    if edge_rule not in EDGE_RULES:
        raise ValueError(f"edge_rule must be one of {EDGE_RULES}, got {edge_rule!r}")
    S = sim.S
    n_agents = S.shape[0]
    edges: set[Edge] = set()
    for n in range(n_agents):
        peers = [m for m in range(n_agents) if m != n and S[n, m] >= tau]
        if edge_rule == "prose":
            peers = [m for m in peers if psi[m] > psi[n]]
        if k is not None:
            peers = sorted(peers, key=lambda m: (-S[n, m], m))[:k]
        edges.update((m, n) for m in peers)
    return edges


def find_cycle(n: int, edges: set[Edge]) -> list[Edge] | None:
    """Return the edges of one directed cycle, or None. Deterministic in index order."""
    succ: dict[int, list[int]] = {i: [] for i in range(n)}
    for src, dst in sorted(edges):
        succ[src].append(dst)
    colour = [0] * n  # 0 unvisited, 1 on stack, 2 done
    parent: dict[int, int] = {}
    for start in range(n):
        if colour[start]:
            continue
        stack_: list[tuple[int, int]] = [(start, 0)]
        colour[start] = 1
        while stack_:
            node, i = stack_[-1]
            if i < len(succ[node]):
                stack_[-1] = (node, i + 1)
                nxt = succ[node][i]
                if colour[nxt] == 0:
                    colour[nxt] = 1
                    parent[nxt] = node
                    stack_.append((nxt, 0))
                elif colour[nxt] == 1:
                    cycle = [(node, nxt)]
                    cur = node
                    while cur != nxt:
                        cycle.append((parent[cur], cur))
                        cur = parent[cur]
                    cycle.reverse()
                    return cycle
            else:
                colour[node] = 2
                stack_.pop()
    return None


def break_cycles(n: int, edges: set[Edge], psi: Sequence[float]) -> tuple[set[Edge], list[Edge]]:
    """Cut weaker-to-stronger edges until the graph is acyclic.

    In each detected cycle the removed edge ``u -> v`` maximises
    ``psi[v] - psi[u]`` (ties to the lexicographically smallest edge).  Every
    cycle has at least one edge with ``psi[v] >= psi[u]``, so removed edges
    never point from a stronger agent to a weaker one.
    """
    kept = set(edges)
    removed: list[Edge] = []
    while (cycle := find_cycle(n, kept)) is not None:
        victim = min(cycle, key=lambda e: (-(psi[e[1]] - psi[e[0]]), e))
        kept.discard(victim)
        removed.append(victim)
    return kept, removed


def topological_order(n: int, edges: set[Edge], psi: Sequence[float]) -> tuple[int, ...]:
    """Kahn's algorithm; among ready nodes the highest psi goes first, then lower index."""
    indeg = [0] * n
    succ: dict[int, list[int]] = {i: [] for i in range(n)}
    for src, dst in edges:
        indeg[dst] += 1
        succ[src].append(dst)
    ready = [(-psi[i], i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        _, node = heapq.heappop(ready)
        order.append(node)
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, (-psi[nxt], nxt))
    if len(order) != n:
        raise ValueError("graph contains a cycle")
    return tuple(order)


def _psi_values(scores: ContributionScores | Sequence[float]) -> list[float]:
    if isinstance(scores, ContributionScores):
        return [float(p) for p in scores.psi]
    return [float(p) for p in scores]


def form_graph(sim: SimilarityMatrix, scores: ContributionScores | Sequence[float], tau: float = 0.5,
               k: int | None = 2, edge_rule: str = "alg2") -> CommGraph:
    psi = _psi_values(scores)
    n = sim.n
    if len(psi) != n:
        raise ValueError(f"scores have length {len(psi)} but the similarity matrix is {n}x{n}")
    edges = candidate_edges(sim, psi, tau, k, edge_rule)
    kept, removed = break_cycles(n, edges, psi)
    order = topological_order(n, kept, psi)
    return CommGraph(n=n, edges=frozenset(kept), topo_order=order, removed_edges=tuple(removed),
                     psi=tuple(psi), round=sim.round)


def reorder(graph: CommGraph, scores: ContributionScores | Sequence[float], round: int | None = None) -> CommGraph:
    """Keep ``graph``'s edges but recompute the schedule under new scores."""
    psi = _psi_values(scores)
    order = topological_order(graph.n, set(graph.edges), psi)
    return CommGraph(n=graph.n, edges=graph.edges, topo_order=order, removed_edges=graph.removed_edges,
                     psi=tuple(psi), round=graph.round if round is None else round)


def roots(graph: CommGraph) -> list[int]:
    """Zero in-degree nodes, highest psi first."""
    psi = graph.psi or (0.0,) * graph.n
    heads = [i for i in range(graph.n) if graph.in_degree(i) == 0]
    return sorted(heads, key=lambda i: (-psi[i], i))


def is_valid_order(graph: CommGraph) -> bool:
    pos = {node: i for i, node in enumerate(graph.topo_order)}
    if sorted(pos) != list(range(graph.n)):
        return False
    return all(pos[src] < pos[dst] for src, dst in graph.edges)


def chain_graph(order: Sequence[int], psi: Sequence[float] | None = None) -> CommGraph:
    """Fixed chain ``order[0] -> order[1] -> ...`` for baseline comparisons."""
    n = len(order)
    edges = frozenset((order[i], order[i + 1]) for i in range(n - 1))
    psi_t = tuple(psi) if psi is not None else (0.0,) * n
    return CommGraph(n=n, edges=edges, topo_order=tuple(order), psi=psi_t)


def complete_dag(n: int, psi: Sequence[float]) -> CommGraph:
    """Every stronger agent feeds every weaker one (psi order, index ties)."""
    order = sorted(range(n), key=lambda i: (-psi[i], i))
    edges = frozenset((order[i], order[j]) for i in range(n) for j in range(i + 1, n))
    return CommGraph(n=n, edges=edges, topo_order=tuple(order), psi=tuple(psi))
