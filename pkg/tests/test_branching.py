import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbnimpute.branching import branching_weight, maximum_branching


def _is_branching(parent):
    for start in parent:
        seen, v = set(), start
        while v in parent:
            if v in seen:
                return False
            seen.add(v)
            v = parent[v]
    return True


def brute_force_best(n, weights):
    best = 0.0
    choices = [[None] + [u for u in range(n) if u != v] for v in range(n)]
    for pick in itertools.product(*choices):
        parent = {v: u for v, u in enumerate(pick) if u is not None}
        if _is_branching(parent):
            best = max(best, sum(weights[(u, v)] for v, u in parent.items()))
    return best


def _random_weights(gen, n, neg=True):
    lo = -1.0 if neg else 0.01
    return {(u, v): float(gen.uniform(lo, 1.0)) for u in range(n) for v in range(n) if u != v}


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=120, deadline=None)
def test_matches_brute_force(n, seed):
    w = _random_weights(np.random.default_rng(seed), n)
    b = maximum_branching(n, w)
    assert _is_branching(b)
    assert all(w[(u, v)] > 0 for v, u in b.items())
    assert branching_weight(b, w) == pytest.approx(brute_force_best(n, w), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_matches_networkx(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 12))
    w = _random_weights(gen, n)
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    g.add_weighted_edges_from((u, v, x) for (u, v), x in w.items() if x > 0)
    ref = nx.maximum_branching(g)
    expect = sum(d["weight"] for _, _, d in ref.edges(data=True))
    assert branching_weight(maximum_branching(n, w), w) == pytest.approx(expect, abs=1e-12)


def test_spanning_when_all_positive():
    gen = np.random.default_rng(3)
    w = _random_weights(gen, 6, neg=False)
    assert len(maximum_branching(6, w)) == 5


def test_cycle_contraction_example():
    # A 3-cycle of heavy edges; the best branching drops its lightest edge.
    w = {(0, 1): 5.0, (1, 2): 5.0, (2, 0): 4.0, (0, 2): 1.0, (1, 0): 1.0, (2, 1): 1.0}
    assert maximum_branching(3, w) == {1: 0, 2: 1}
    assert maximum_branching(3, {}) == {}
