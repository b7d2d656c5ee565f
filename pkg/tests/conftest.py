"""Shared oracles used across the test modules.

These are deliberately independent of the library code paths they check:
plain BFS for connectivity, central differences for gradients, and literal
re-implementations of update equations where a test demands one.
"""

import numpy as np
import pytest


def bfs_connected(m, edges):
    """Reachability oracle on an undirected edge set."""
    adj = {i: set() for i in range(m)}
    for (a, b) in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, frontier = {0}, [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return len(seen) == m


def bfs_strongly_connected(m, directed_edges):
    """Strong-connectivity oracle: forward and reverse reachability from node 0."""

    def reach(edges):
        adj = {i: set() for i in range(m)}
        for (a, b) in edges:
            adj[a].add(b)
        seen, frontier = {0}, [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return len(seen) == m

    return reach(directed_edges) and reach([(b, a) for (a, b) in directed_edges])


def central_diff_gradient(fn, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
