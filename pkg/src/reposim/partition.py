"""Multilevel k-way partitioning of the user-repository interaction graph.

Pipeline: heavy-edge-matching coarsening, greedy region growing on the
coarsest graph, then boundary refinement (Fiduccia-Mattheyses-style greedy
moves) while projecting back up the levels. Balance is enforced on
original-vertex counts: every part holds at most ceil(balance * n / k)
vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .core import InfeasibleBalance
from .ingest import TrainingSlice

DEFAULT_BALANCE = 1.05
COARSEST_SIZE_FLOOR = 48
MAX_REFINE_SWEEPS = 8


@dataclass(frozen=True)
class PartitionAssignment:
    """k-way vertex assignment plus the cut it achieves."""

    nodes: tuple[Hashable, ...]
    parts: tuple[int, ...]
    k: int
    cut_weight: float

    def part_of(self) -> dict[Hashable, int]:
        return dict(zip(self.nodes, self.parts))

    def sizes(self) -> list[int]:
        out = [0] * self.k
        for p in self.parts:
            out[p] += 1
        return out


class WeightedGraph:
    """Undirected weighted graph over arbitrary hashable node keys."""

    def __init__(self, nodes: Iterable[Hashable] = ()):
        self.index: dict[Hashable, int] = {}
        self.nodes: list[Hashable] = []
        self.adj: list[dict[int, float]] = []
        for n in nodes:
            self.add_node(n)

    def add_node(self, key: Hashable) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.nodes)
            self.index[key] = i
            self.nodes.append(key)
            self.adj.append({})
        return i

    def add_edge(self, a: Hashable, b: Hashable, w: float = 1.0) -> None:
        if a == b:
            return
        i, j = self.add_node(a), self.add_node(b)
        self.adj[i][j] = self.adj[i].get(j, 0.0) + w
        self.adj[j][i] = self.adj[j].get(i, 0.0) + w

    def __len__(self) -> int:
        return len(self.nodes)

    def total_edge_weight(self) -> float:
        return sum(sum(nbrs.values()) for nbrs in self.adj) / 2.0


def build_interaction_graph(slice_: TrainingSlice) -> WeightedGraph:
    """User and repo vertices linked by event counts.

    User and repo id spaces may overlap, so vertex keys are namespaced
    tuples ("u", id) and ("r", id).
    """
    g = WeightedGraph()
    for user_id in slice_.histories:
        g.add_node(("u", user_id))
    for repo_id in slice_.repo_states:
        g.add_node(("r", repo_id))
    for user_id, hist in slice_.histories.items():
        for (_, repo_id), c in hist.counts.items():
            g.add_edge(("u", user_id), ("r", repo_id), float(c))
    return g


def _cut_weight(adj: Sequence[dict[int, float]], part: np.ndarray) -> float:
    cut = 0.0
    for i, nbrs in enumerate(adj):
        pi = part[i]
        for j, w in nbrs.items():
            if j > i and part[j] != pi:
                cut += w
    return cut


def _coarsen(
    adj: Sequence[dict[int, float]], vweight: np.ndarray, rng: np.random.Generator
) -> tuple[list[dict[int, float]], np.ndarray, np.ndarray]:
    """One level of heavy-edge matching. Returns (coarse_adj, coarse_vw, map)."""
    n = len(adj)
    order = rng.permutation(n)
    match = np.full(n, -1, dtype=np.int64)
    for v in order:
        if match[v] != -1:
            continue
        best, best_w = -1, -1.0
        for u, w in adj[v].items():
            if match[u] == -1 and (w > best_w or (w == best_w and u < best)):
                best, best_w = u, w
        if best == -1:
            match[v] = v
        else:
            match[v] = best
            match[best] = v

    cmap = np.full(n, -1, dtype=np.int64)
    nc = 0
    for v in range(n):
        if cmap[v] != -1:
            continue
        cmap[v] = nc
        u = match[v]
        if u != v and cmap[u] == -1:
            cmap[u] = nc
        nc += 1

    cadj: list[dict[int, float]] = [dict() for _ in range(nc)]
    cvw = np.zeros(nc, dtype=np.int64)
    for v in range(n):
        cv = cmap[v]
        cvw[cv] += vweight[v]
        row = cadj[cv]
        for u, w in adj[v].items():
            cu = cmap[u]
            if cu != cv:
                row[cu] = row.get(cu, 0.0) + w
    return cadj, cvw, cmap


def _grow_initial(
    adj: Sequence[dict[int, float]],
    vweight: np.ndarray,
    k: int,
    cap: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Greedy graph growing: seed each part, absorb best-connected vertices."""
    n = len(adj)
    part = np.full(n, -1, dtype=np.int64)
    loads = np.zeros(k, dtype=np.int64)
    total = int(vweight.sum())
    remaining = total
    order = list(rng.permutation(n))

    for p in range(k):
        # even split of what is left across the parts still to fill
        target = min(cap, math.ceil(remaining / (k - p)))
        seed = next((v for v in order if part[v] == -1), None)
        if seed is None:
            break
        part[seed] = p
        loads[p] += vweight[seed]
        remaining -= vweight[seed]
        # frontier gains: connection weight into part p
        gain: dict[int, float] = {}
        for u, w in adj[seed].items():
            if part[u] == -1:
                gain[u] = gain.get(u, 0.0) + w
        while loads[p] < target and gain:
            v = max(gain, key=lambda x: (gain[x], -x))
            del gain[v]
            if part[v] != -1 or loads[p] + vweight[v] > cap:
                continue
            part[v] = p
            loads[p] += vweight[v]
            remaining -= vweight[v]
            for u, w in adj[v].items():
                if part[u] == -1:
                    gain[u] = gain.get(u, 0.0) + w

    # leftovers: least-loaded feasible part, preferring connected ones
    for v in order:
        if part[v] != -1:
            continue
        conn = np.zeros(k)
        for u, w in adj[v].items():
            if part[u] != -1:
                conn[part[u]] += w
        choices = sorted(
            range(k), key=lambda p: (-(conn[p]), loads[p], p)
        )
        placed = False
        for p in choices:
            if loads[p] + vweight[v] <= cap:
                part[v] = p
                loads[p] += vweight[v]
                placed = True
                break
        if not placed:  # cap math guarantees k*cap >= n, so some part fits
            p = int(np.argmin(loads))
            part[v] = p
            loads[p] += vweight[v]
    return part


def _refine(
    adj: Sequence[dict[int, float]],
    vweight: np.ndarray,
    part: np.ndarray,
    k: int,
    cap: int,
) -> None:
    """Greedy boundary passes: move vertices to their best part while the
    cut strictly improves and balance holds. Mutates ``part`` in place."""
    n = len(adj)
    loads = np.zeros(k, dtype=np.int64)
    for v in range(n):
        loads[part[v]] += vweight[v]

    for _ in range(MAX_REFINE_SWEEPS):
        moved = 0
        for v in range(n):
            nbrs = adj[v]
            if not nbrs:
                continue
            p = part[v]
            conn = {}
            for u, w in nbrs.items():
                q = part[u]
                conn[q] = conn.get(q, 0.0) + w
            internal = conn.get(p, 0.0)
            best_q, best_gain = p, 0.0
            for q, w in conn.items():
                if q == p:
                    continue
                gain = w - internal
                if gain > best_gain or (gain == best_gain and gain > 0 and q < best_q):
                    best_q, best_gain = q, gain
            if best_q != p and best_gain > 0 and loads[best_q] + vweight[v] <= cap:
                loads[p] -= vweight[v]
                loads[best_q] += vweight[v]
                part[v] = best_q
                moved += 1
        if moved == 0:
            break


def partition_graph(
    graph: WeightedGraph,
    k: int,
    *,
    seed: int = 0,
    balance: float = DEFAULT_BALANCE,
) -> PartitionAssignment:
    """Split ``graph`` into ``k`` balanced parts minimising edge cut."""
    n = len(graph)
    if n == 0:
        raise ValueError("graph is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise InfeasibleBalance(f"cannot split {n} vertices into {k} parts")
    if k == 1:
        return PartitionAssignment(tuple(graph.nodes), (0,) * n, 1, 0.0)

    cap = math.ceil(balance * n / k)
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, k]))

    # coarsening phase
    levels: list[tuple[Sequence[dict[int, float]], np.ndarray, np.ndarray]] = []
    adj: Sequence[dict[int, float]] = graph.adj
    vweight = np.ones(n, dtype=np.int64)
    floor = max(COARSEST_SIZE_FLOOR, 8 * k)
    while len(adj) > floor:
        cadj, cvw, cmap = _coarsen(adj, vweight, rng)
        if len(cadj) > 0.95 * len(adj):
            break  # matching stalled (e.g. star graphs)
        levels.append((adj, vweight, cmap))
        adj, vweight = cadj, cvw

    part = _grow_initial(adj, vweight, k, cap, rng)
    _refine(adj, vweight, part, k, cap)

    # uncoarsening phase
    for fine_adj, fine_vw, cmap in reversed(levels):
        part = part[cmap]
        _refine(fine_adj, fine_vw, part, k, cap)

    cut = _cut_weight(graph.adj, part)
    return PartitionAssignment(tuple(graph.nodes), tuple(int(p) for p in part), k, cut)
