"""Stochastic graph augmentations used to build contrastive views.

Five kinds: node_drop, edge_pert, subgraph, attr_mask, identical. Every
augmentation consumes randomness only from the Generator passed in, so a
fixed seed reproduces the view bit for bit. Outputs are always valid graphs
with at least one node; degenerate sizes clamp rather than fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Graph

KINDS = ("node_drop", "edge_pert", "subgraph", "attr_mask", "identical")

DEFAULT_RATIO = 0.2

# per-dataset tuned view pairs; anything unlisted falls back to _DEFAULT_PAIR
_PAIR_TABLE = {
    "NCI1": ("node_drop", "attr_mask"),
    "PROTEINS": ("node_drop", "edge_pert"),
    "DD": ("node_drop", "subgraph"),
    "MUTAG": ("node_drop", "edge_pert"),
    "DHFR": ("edge_pert", "identical"),
    "BZR": ("node_drop", "attr_mask"),
    "COX2": ("node_drop", "subgraph"),
    "PTC_MR": ("node_drop", "edge_pert"),
    "PTC_FM": ("node_drop", "edge_pert"),
    "IMDB_B": ("subgraph", "identical"),
    "REDDIT_B": ("subgraph", "identical"),
}
_DEFAULT_PAIR = ("node_drop", "edge_pert")


@dataclass(frozen=True)
class AugmentationKind:
    kind: str
    ratio: float = DEFAULT_RATIO

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}; "
                             f"valid kinds: {', '.join(KINDS)}")
        if not (0.0 <= self.ratio < 1.0):
            raise ValueError(f"ratio must be in [0, 1), got {self.ratio}")


def pair_for_dataset(name: str, ratio: float = DEFAULT_RATIO):
    """Tuned augmentation pair for a benchmark dataset name.

    Lookup is case-insensitive and treats '-' and '_' alike. Names outside
    the table get the (node_drop, edge_pert) default.
    """
    key = name.upper().replace("-", "_")
    a, b = _PAIR_TABLE.get(key, _DEFAULT_PAIR)
    return AugmentationKind(a, ratio), AugmentationKind(b, ratio)


def apply(g: Graph, kind: AugmentationKind, rng: np.random.Generator) -> Graph:
    """Apply one augmentation and return a new Graph; the input is untouched."""
    if kind.kind == "identical":
        return g.copy()
    if kind.kind == "node_drop":
        return _node_drop(g, kind.ratio, rng)
    if kind.kind == "edge_pert":
        return _edge_pert(g, kind.ratio, rng)
    if kind.kind == "subgraph":
        return _subgraph(g, kind.ratio, rng)
    if kind.kind == "attr_mask":
        return _attr_mask(g, kind.ratio, rng)
    raise ValueError(f"unknown augmentation kind {kind.kind!r}")  # unreachable


def _induced(g: Graph, keep: list) -> Graph:
    keep = sorted(keep)
    remap = {old: new for new, old in enumerate(keep)}
    kept = set(keep)
    edges = sorted((remap[i], remap[j], w) for i, j, w in g.edges
                   if i in kept and j in kept)
    return Graph(len(keep), edges, g.features[keep].copy(), g.label)


def _node_drop(g: Graph, ratio: float, rng) -> Graph:
    k = min(math.floor(ratio * g.num_nodes), g.num_nodes - 1)
    if k <= 0:
        return g.copy()
    drop = set(rng.choice(g.num_nodes, size=k, replace=False).tolist())
    return _induced(g, [v for v in range(g.num_nodes) if v not in drop])


def _edge_pert(g: Graph, ratio: float, rng) -> Graph:
    m = g.num_edges
    k = math.floor(ratio * m)
    if k <= 0:
        return g.copy()
    remove = set(rng.choice(m, size=k, replace=False).tolist())
    kept = [e for idx, e in enumerate(g.edges) if idx not in remove]
    present = {(i, j) for i, j, _ in kept}
    free = [(i, j) for i in range(g.num_nodes) for j in range(i + 1, g.num_nodes)
            if (i, j) not in present]
    # removal frees at least k slots, so k additions always fit
    pick = rng.choice(len(free), size=k, replace=False)
    added = [(free[idx][0], free[idx][1], 1.0) for idx in sorted(pick.tolist())]
    return Graph(g.num_nodes, sorted(kept + added), g.features.copy(), g.label)


def _subgraph(g: Graph, ratio: float, rng) -> Graph:
    target = max(1, math.ceil((1.0 - ratio) * g.num_nodes))
    if target >= g.num_nodes:
        return g.copy()
    adj = g.neighbors()
    cur = int(rng.integers(g.num_nodes))
    keep = {cur}
    stall = 0
    while len(keep) < target:
        nbrs = adj[cur]
        if nbrs:
            cur = int(nbrs[rng.integers(len(nbrs))])
            if cur in keep:
                stall += 1
            else:
                keep.add(cur)
                stall = 0
        else:
            stall = 4 * g.num_nodes  # dead end; force a frontier jump
        if stall >= 4 * g.num_nodes:
            frontier = [u for u in keep if any(w not in keep for w in adj[u])]
            if not frontier:
                break  # component smaller than target; keep what we have
            cur = int(frontier[rng.integers(len(frontier))])
            stall = 0
    return _induced(g, list(keep))


def _attr_mask(g: Graph, ratio: float, rng) -> Graph:
    k = math.floor(ratio * g.num_nodes)
    out = g.copy()
    if k <= 0:
        return out
    rows = rng.choice(g.num_nodes, size=k, replace=False)
    out.features[rows] = 0.0
    return out
