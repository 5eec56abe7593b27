"""Graph container, TUDataset-format IO, and adjacency matrix helpers.

Graphs are undirected, 0-indexed, without self loops. Edges are stored once
with endpoints ordered (i < j) and a positive weight (1.0 for unweighted
datasets). Node features live in a dense float64 matrix with one row per node.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

DEGREE_FEATURE_CAP = 400


class DatasetError(Exception):
    """Raised for missing files or malformed dataset content."""


@dataclass
class Graph:
    num_nodes: int
    edges: list  # list of (i, j, w) with i < j
    features: np.ndarray  # (num_nodes, F) float64
    label: int | None = None

    def validate(self):
        """Check structural invariants; raise ValueError on the first failure."""
        if self.num_nodes < 1:
            raise ValueError("graph must have at least one node")
        seen = set()
        for i, j, w in self.edges:
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i},{j}) endpoint out of range")
            if i == j:
                raise ValueError(f"self loop at node {i}")
            if i > j:
                raise ValueError(f"edge ({i},{j}) not stored with i < j")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            if not w > 0:
                raise ValueError(f"edge ({i},{j}) has non-positive weight {w}")
            seen.add((i, j))
        if self.features.shape[0] != self.num_nodes:
            raise ValueError("feature row count does not match node count")
        if self.features.ndim != 2:
            raise ValueError("feature matrix must be 2-D")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list:
        """Adjacency lists (undirected, both directions)."""
        adj = [[] for _ in range(self.num_nodes)]
        for i, j, _ in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.num_nodes, dtype=np.int64)
        for i, j, _ in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def copy(self) -> "Graph":
        return Graph(self.num_nodes, [tuple(e) for e in self.edges],
                     self.features.copy(), self.label)


@dataclass
class GraphDataset:
    name: str
    graphs: list = field(default_factory=list)
    num_classes: int = 0

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, idx):
        return self.graphs[idx]

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].features.shape[1] if self.graphs else 0


def adjacency_with_self_loops(g: Graph) -> np.ndarray:
    """Dense symmetric adjacency with unit self loops added, weights kept."""
    a = np.zeros((g.num_nodes, g.num_nodes), dtype=np.float64)
    for i, j, w in g.edges:
        a[i, j] = w
        a[j, i] = w
    a[np.diag_indices_from(a)] += 1.0
    return a


def normalized_adjacency_power(g: Graph, tau: int = 1) -> np.ndarray:
    """tau-th power of the symmetrically normalized self-looped adjacency.

    Returns (D^-1/2 (A + I) D^-1/2)^tau where D is the self-looped degree
    matrix. The base matrix is symmetric with spectrum in [-1, 1], so every
    power keeps spectral radius <= 1.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    a = adjacency_with_self_loops(g)
    dinv = 1.0 / np.sqrt(a.sum(axis=1))  # diagonal of D^-1/2; row sums > 0
    norm = (a * dinv[:, None]) * dinv[None, :]
    out = norm
    for _ in range(tau - 1):
        out = out @ norm
    return out


def _read_rows(path: str, expect_cols: int | None = None) -> list:
    """Parse a TU-format file of comma/whitespace separated numeric rows."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = [p for p in stripped.replace(",", " ").split() if p]
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise DatasetError(f"{os.path.basename(path)}:{lineno}: "
                                   f"non-numeric entry in {stripped!r}")
            if expect_cols is not None and len(vals) != expect_cols:
                raise DatasetError(f"{os.path.basename(path)}:{lineno}: expected "
                                   f"{expect_cols} columns, got {len(vals)}")
            rows.append(vals)
    return rows


def load_tudataset(root: str, name: str) -> GraphDataset:
    """Load a dataset stored in the TUDataset flat-file layout.

    Expects ``{root}/{name}/{name}_A.txt`` (1-indexed edge pairs),
    ``_graph_indicator.txt`` and ``_graph_labels.txt``; optional
    ``_node_labels.txt`` and ``_node_attributes.txt``. Node features are the
    attributes when present, else one-hot node labels, else one-hot degree
    capped at 400. Graph labels are remapped to contiguous ints from 0.
    """
    base = os.path.join(root, name)
    def fpath(suffix):
        return os.path.join(base, f"{name}_{suffix}.txt")

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not os.path.isfile(fpath(suffix)):
            raise DatasetError(f"missing required file {name}_{suffix}.txt under {base}")

    indicator = [int(r[0]) for r in _read_rows(fpath("graph_indicator"), 1)]
    n_total = len(indicator)
    n_graphs = max(indicator)
    if sorted(set(indicator)) != list(range(1, n_graphs + 1)):
        raise DatasetError(f"{name}_graph_indicator.txt: graph ids not contiguous from 1")

    raw_labels = [int(r[0]) for r in _read_rows(fpath("graph_labels"), 1)]
    if len(raw_labels) != n_graphs:
        raise DatasetError(f"{name}_graph_labels.txt: {len(raw_labels)} labels "
                           f"for {n_graphs} graphs")
    label_map = {v: k for k, v in enumerate(sorted(set(raw_labels)))}

    # global -> (graph, local) node index mapping
    node_graph = np.array(indicator, dtype=np.int64) - 1
    local_idx = np.zeros(n_total, dtype=np.int64)
    counts = np.zeros(n_graphs, dtype=np.int64)
    for v in range(n_total):
        local_idx[v] = counts[node_graph[v]]
        counts[node_graph[v]] += 1

    edge_sets = [set() for _ in range(n_graphs)]
    with open(fpath("A")) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = [p for p in stripped.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise DatasetError(f"{name}_A.txt:{lineno}: expected 2 columns")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{name}_A.txt:{lineno}: non-integer endpoint")
            if not (1 <= u <= n_total and 1 <= v <= n_total):
                raise DatasetError(f"{name}_A.txt:{lineno}: node id out of range")
            gu, gv = node_graph[u - 1], node_graph[v - 1]
            if gu != gv:
                raise DatasetError(f"{name}_A.txt:{lineno}: edge ({u},{v}) crosses graphs")
            if u == v:
                continue  # stored self loops are dropped
            a, b = int(local_idx[u - 1]), int(local_idx[v - 1])
            edge_sets[gu].add((min(a, b), max(a, b)))

    # node features: attributes > one-hot labels > one-hot capped degree
    features = None
    if os.path.isfile(fpath("node_attributes")):
        rows = _read_rows(fpath("node_attributes"))
        if len(rows) != n_total:
            raise DatasetError(f"{name}_node_attributes.txt: row count mismatch")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise DatasetError(f"{name}_node_attributes.txt: ragged rows")
        features = np.array(rows, dtype=np.float64)
    elif os.path.isfile(fpath("node_labels")):
        vals = [int(r[0]) for r in _read_rows(fpath("node_labels"), 1)]
        if len(vals) != n_total:
            raise DatasetError(f"{name}_node_labels.txt: row count mismatch")
        vmap = {v: k for k, v in enumerate(sorted(set(vals)))}
        features = np.zeros((n_total, len(vmap)), dtype=np.float64)
        for v, lab in enumerate(vals):
            features[v, vmap[lab]] = 1.0

    graphs = []
    for gi in range(n_graphs):
        n = int(counts[gi])
        if n == 0:
            raise DatasetError(f"graph {gi + 1} has no nodes")
        edges = [(i, j, 1.0) for i, j in sorted(edge_sets[gi])]
        graphs.append(Graph(n, edges, np.zeros((n, 0)), label_map[raw_labels[gi]]))

    if features is not None:
        for gi, g in enumerate(graphs):
            mask = node_graph == gi
            g.features = features[mask]
    else:
        degs = [g.degrees() for g in graphs]
        cap = min(max((int(d.max()) if len(d) else 0) for d in degs), DEGREE_FEATURE_CAP)
        for g, d in zip(graphs, degs):
            oh = np.zeros((g.num_nodes, cap + 1), dtype=np.float64)
            oh[np.arange(g.num_nodes), np.minimum(d, cap)] = 1.0
            g.features = oh

    ds = GraphDataset(name, graphs, len(label_map))
    for g in ds.graphs:
        g.validate()
    return ds


def write_tudataset(ds: GraphDataset, root: str, node_labels: list | None = None):
    """Serialize a dataset into the TUDataset flat-file layout under root/name.

    When node_labels is given (list of per-graph int arrays) a _node_labels
    file is produced; otherwise a _node_attributes file holds the feature
    rows so that a reload reproduces the same features.
    """
    base = os.path.join(root, ds.name)
    os.makedirs(base, exist_ok=True)
    def fpath(suffix):
        return os.path.join(base, f"{ds.name}_{suffix}.txt")

    offsets = np.cumsum([0] + [g.num_nodes for g in ds.graphs])
    with open(fpath("A"), "w") as fh:
        for gi, g in enumerate(ds.graphs):
            for i, j, _ in g.edges:
                u, v = offsets[gi] + i + 1, offsets[gi] + j + 1
                fh.write(f"{u}, {v}\n")
                fh.write(f"{v}, {u}\n")
    with open(fpath("graph_indicator"), "w") as fh:
        for gi, g in enumerate(ds.graphs):
            fh.write(f"{gi + 1}\n" * g.num_nodes)
    with open(fpath("graph_labels"), "w") as fh:
        for g in ds.graphs:
            fh.write(f"{g.label}\n")
    if node_labels is not None:
        with open(fpath("node_labels"), "w") as fh:
            for labs in node_labels:
                for lab in labs:
                    fh.write(f"{int(lab)}\n")
    else:
        with open(fpath("node_attributes"), "w") as fh:
            for g in ds.graphs:
                for row in g.features:
                    fh.write(", ".join(repr(float(x)) for x in row) + "\n")
