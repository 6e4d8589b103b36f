"""Maximum-weight branching (Chu-Liu/Edmonds).

A branching is a set of edges in which every node has at most one incoming
edge and there is no cycle, i.e. a forest of arborescences. Only
positive-weight edges can improve a branching, so non-positive edges are
dropped and a virtual root with zero-weight edges to every node turns the
problem into a maximum spanning arborescence.
"""
from __future__ import annotations

from typing import Mapping


def _find_cycle(parent: Mapping[int, int]):
    for start in sorted(parent):
        seen = []
        v = start
        while v in parent and v not in seen:
            seen.append(v)
            v = parent[v]
        if v in seen:
            return seen[seen.index(v):]
    return None


def _arborescence(nodes, edges, root):
    """Max spanning arborescence. ``edges``: {(u, v): weight}; returns {v: (u, v) original}.

    Ties on the best incoming edge go to the lowest source node.
    """
    best = {}
    for (u, v), w in sorted(edges.items()):
        if v == root or u == v:
            continue
        if v not in best or w > edges[best[v]]:
            best[v] = (u, v)
    parent = {v: e[0] for v, e in best.items()}
    cycle = _find_cycle(parent)
    if cycle is None:
        return best
    in_cycle = set(cycle)
    c = max(nodes) + 1
    new_edges, origin = {}, {}
    for (u, v), w in sorted(edges.items()):
        if u in in_cycle and v in in_cycle:
            continue
        if v in in_cycle:
            key, w2 = (u, c), w - edges[best[v]]
        elif u in in_cycle:
            key, w2 = (c, v), w
        else:
            key, w2 = (u, v), w
        if key not in new_edges or w2 > new_edges[key]:
            new_edges[key] = w2
            origin[key] = (u, v)
    new_nodes = [x for x in nodes if x not in in_cycle] + [c]
    sub = _arborescence(new_nodes, new_edges, root)
    result = {}
    entering = None
    for v, key in sub.items():
        u, v_orig = origin[key]
        result[v_orig] = (u, v_orig)
        if v == c:
            entering = (u, v_orig)
    for v in cycle:
        if v != entering[1]:
            result[v] = best[v]
    return result


def maximum_branching(num_nodes: int, weights: Mapping[tuple[int, int], float]) -> dict[int, int]:
    """Maximum-weight branching over nodes ``0 .. num_nodes - 1``.

    ``weights`` maps directed edges ``(u, v)`` to weights; edges with weight
    ``<= 0`` are ignored. Returns ``{child: parent}`` for the chosen edges.
    """
    root = -1
    edges = {(root, v): 0.0 for v in range(num_nodes)}
    for (u, v), w in weights.items():
        if u != v and w > 0:
            edges[(u, v)] = float(w)
    chosen = _arborescence([root, *range(num_nodes)], edges, root)
    return {v: u for v, (u, _) in chosen.items() if u != root}


def branching_weight(branching: Mapping[int, int], weights) -> float:
    return sum(weights[(u, v)] for v, u in branching.items())
