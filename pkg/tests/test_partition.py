import math

import numpy as np
import pytest

from reposim.core import InfeasibleBalance
from reposim.partition import PartitionAssignment, WeightedGraph, partition_graph


def planted_two_community(n=400, p_in=0.1, p_out=0.005, seed=0):
    """G(n) with two equal communities; returns (graph, membership array)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    member = np.array([0] * half + [1] * (n - half))
    g = WeightedGraph(range(n))
    iu, ju = np.triu_indices(n, k=1)
    same = member[iu] == member[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < prob
    for a, b in zip(iu[keep], ju[keep]):
        g.add_edge(int(a), int(b), 1.0)
    return g, member


def random_balanced_bisection_cut(g: WeightedGraph, n_samples=100, seed=0):
    """Mean cut over uniformly random balanced bisections (the test oracle)."""
    rng = np.random.default_rng(seed)
    n = len(g)
    cuts = []
    for _ in range(n_samples):
        perm = rng.permutation(n)
        side = np.zeros(n, dtype=int)
        side[perm[: n // 2]] = 1
        cut = 0.0
        for i, nbrs in enumerate(g.adj):
            for j, w in nbrs.items():
                if j > i and side[i] != side[j]:
                    cut += w
        cuts.append(cut)
    return float(np.mean(cuts))


def assignment_cut(g: WeightedGraph, assignment: PartitionAssignment) -> float:
    part = dict(zip(assignment.nodes, assignment.parts))
    cut = 0.0
    for i, nbrs in enumerate(g.adj):
        for j, w in nbrs.items():
            if j > i and part[g.nodes[i]] != part[g.nodes[j]]:
                cut += w
    return cut


def test_single_part_is_trivial():
    g = WeightedGraph(range(10))
    for i in range(9):
        g.add_edge(i, i + 1)
    a = partition_graph(g, 1)
    assert a.sizes() == [10]
    assert a.cut_weight == 0.0


def test_disconnected_communities_split_cleanly():
    rng = np.random.default_rng(5)
    g = WeightedGraph(range(200))
    for block in (range(0, 100), range(100, 200)):
        block = list(block)
        for i in block[1:]:  # spanning path keeps each block connected
            g.add_edge(i, i - 1)
        for _ in range(300):
            a, b = rng.choice(block, size=2, replace=False)
            g.add_edge(int(a), int(b))
    a = partition_graph(g, 2, seed=1)
    assert a.cut_weight == 0.0
    assert sorted(a.sizes()) == [100, 100]


def test_infeasible_when_k_exceeds_vertices():
    g = WeightedGraph(range(3))
    g.add_edge(0, 1)
    with pytest.raises(InfeasibleBalance):
        partition_graph(g, 4)


def test_balance_cap_respected():
    rng = np.random.default_rng(11)
    g = WeightedGraph(range(157))
    for _ in range(800):
        a, b = rng.integers(0, 157, size=2)
        if a != b:
            g.add_edge(int(a), int(b))
    for k in (2, 3, 5):
        a = partition_graph(g, k, seed=2)
        cap = math.ceil(1.05 * 157 / k)
        assert max(a.sizes()) <= cap
        assert sum(a.sizes()) == 157


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planted_communities_beat_random_bisection(seed):
    g, member = planted_two_community(seed=seed)
    baseline = random_balanced_bisection_cut(g, n_samples=100, seed=seed)
    a = partition_graph(g, 2, seed=seed)
    assert a.cut_weight == pytest.approx(assignment_cut(g, a))
    assert a.cut_weight <= 0.5 * baseline


def test_partition_deterministic():
    g, _ = planted_two_community(seed=9)
    a = partition_graph(g, 4, seed=3)
    b = partition_graph(g, 4, seed=3)
    assert a.parts == b.parts
    assert a.cut_weight == b.cut_weight


def test_reported_cut_matches_recomputation():
    g, _ = planted_two_community(n=120, seed=4)
    a = partition_graph(g, 3, seed=0)
    assert a.cut_weight == pytest.approx(assignment_cut(g, a))
