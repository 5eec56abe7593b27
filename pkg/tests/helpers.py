"""Shared fixture builders for the test suite."""
import numpy as np

from topotensor.graphs import Graph, GraphDataset


def random_graph(rng, n=None, p=0.4, feature_dim=3, weighted=False):
    """Erdos-Renyi style random graph with random features."""
    if n is None:
        n = int(rng.integers(1, 11))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                w = float(rng.uniform(0.5, 2.0)) if weighted else 1.0
                edges.append((i, j, w))
    feats = rng.standard_normal((n, feature_dim))
    g = Graph(n, edges, feats, label=int(rng.integers(0, 2)))
    return g


def random_connected_graph(rng, n, extra_edges=2, feature_dim=3):
    """Random tree plus a few extra edges; always connected."""
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    pool = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    rng.shuffle(pool)
    for e in pool[:extra_edges]:
        edges.add(e)
    feats = rng.standard_normal((n, feature_dim))
    return Graph(n, [(i, j, 1.0) for i, j in sorted(edges)], feats, label=0)


def injective_filtration(rng, n):
    """Random injective vertex values in (0, 1), shuffled."""
    vals = (np.arange(n, dtype=np.float64) + rng.uniform(0.05, 0.95)) / (n + 1)
    rng.shuffle(vals)
    return vals


def tiny_dataset(rng, count=6, feature_dim=3):
    graphs = []
    for k in range(count):
        g = random_connected_graph(rng, int(rng.integers(4, 9)), feature_dim=feature_dim)
        g.label = k % 2
        graphs.append(g)
    return GraphDataset("tiny", graphs, 2)
