"""Constructed datasets with controllable topology/label signal.

trees_vs_cycles: 20 random trees vs 20 unicyclic graphs. A single extra edge
separates the classes in first homology, so the topological channel alone can
solve it; node features are constant ones.

mutag_like: a 188-graph, 125/63 two-class set shaped like the small molecular
benchmarks: the majority class carries one to three six/five-rings joined by
bridges, the minority class is tree-heavy with an occasional square, and the
seven node-label types are drawn from class-dependent distributions. Both the
structure channel and the label statistics carry signal, so neither channel is
redundant.
"""
from __future__ import annotations

import numpy as np

from .graphs import Graph, GraphDataset


def _random_tree_edges(rng: np.random.Generator, n: int) -> list:
    return [(int(rng.integers(0, i)), i, 1.0) for i in range(1, n)]


def _canon(edges) -> list:
    return sorted({(min(u, v), max(u, v)) for u, v, *_ in edges})


def _with_weights(edges) -> list:
    return [(u, v, 1.0) for u, v in edges]


def _nontree_edge(rng, n, edges) -> tuple:
    present = {(u, v) for u, v, _ in edges}
    while True:
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u == v:
            continue
        u, v = min(u, v), max(u, v)
        if (u, v) not in present:
            return u, v


def make_trees_vs_cycles(per_class: int = 20, seed: int = 0) -> GraphDataset:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    graphs = []
    for label in (0, 1):
        for _ in range(per_class):
            n = int(rng.integers(8, 13))
            edges = _random_tree_edges(rng, n)
            if label == 1:
                u, v = _nontree_edge(rng, n, edges)
                edges.append((u, v, 1.0))
            graphs.append(Graph(num_nodes=n,
                                edges=_with_weights(_canon(edges)),
                                features=np.ones((n, 1)),
                                label=label))
    return GraphDataset(name="trees_vs_cycles", graphs=graphs, num_classes=2)


_NUM_NODE_TYPES = 7
# majority class leans on the first three types, minority on the later ones
_TYPE_DIST = {
    1: np.array([0.50, 0.22, 0.12, 0.07, 0.05, 0.03, 0.01]),
    0: np.array([0.30, 0.05, 0.05, 0.25, 0.17, 0.12, 0.06]),
}


def _ring_edges(start: int, size: int) -> list:
    return [(start + i, start + (i + 1) % size) for i in range(size)]


def _ringed_graph(rng: np.random.Generator) -> tuple[int, list]:
    """One to three rings joined by bridge edges, padded with pendant nodes."""
    num_rings = int(rng.choice([1, 2, 3], p=[0.3, 0.5, 0.2]))
    edges = []
    anchors = []
    n = 0
    for _ in range(num_rings):
        size = 5 if rng.random() < 0.25 else 6
        edges.extend(_ring_edges(n, size))
        anchors.append(n)
        n += size
    for a, b in zip(anchors, anchors[1:]):
        edges.append((a, b))
    target = int(rng.integers(max(n + 1, 14), 25))
    while n < target:
        edges.append((int(rng.integers(0, n)), n))
        n += 1
    return n, edges


def _treeish_graph(rng: np.random.Generator) -> tuple[int, list]:
    """Random tree, 30% of the time with one square hung off it."""
    n = int(rng.integers(10, 21))
    edges = [(u, v) for u, v, _ in _random_tree_edges(rng, n)]
    if rng.random() < 0.3:
        attach = int(rng.integers(0, n))
        square = _ring_edges(n, 4)
        edges.extend(square)
        edges.append((attach, n))
        n += 4
    return n, edges


def make_mutag_like(seed: int = 7) -> GraphDataset:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    graphs = []
    for label, count in ((1, 125), (0, 63)):
        for _ in range(count):
            n, edges = _ringed_graph(rng) if label == 1 else _treeish_graph(rng)
            types = rng.choice(_NUM_NODE_TYPES, size=n, p=_TYPE_DIST[label])
            features = np.zeros((n, _NUM_NODE_TYPES))
            features[np.arange(n), types] = 1.0
            graphs.append(Graph(num_nodes=n,
                                edges=_with_weights(_canon(edges)),
                                features=features,
                                label=label))
    order = np.random.default_rng(np.random.SeedSequence([seed, 203])) \
        .permutation(len(graphs))
    return GraphDataset(name="mutag_like",
                        graphs=[graphs[i] for i in order], num_classes=2)


def shuffle_labels(dataset: GraphDataset, seed: int = 0) -> GraphDataset:
    """Same graphs, labels permuted across them: the permutation-null dataset."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 404]))
    labels = [g.label for g in dataset.graphs]
    perm = rng.permutation(len(labels))
    graphs = []
    for g, j in zip(dataset.graphs, perm):
        clone = g.copy()
        clone.label = labels[j]
        graphs.append(clone)
    return GraphDataset(name=f"{dataset.name}_shuffled", graphs=graphs,
                        num_classes=dataset.num_classes)


SYNTHETIC_DATASETS = {
    "trees_vs_cycles": make_trees_vs_cycles,
    "mutag_like": make_mutag_like,
}
