"""Extended persistent homology of vertex-filtered graphs.

The extended filtration sweeps the sublevel sets upward (edges enter at the
max endpoint value) and then sweeps relative superlevel sets downward (edges
enter at the min endpoint value, realized by coning the descending complex
onto an apex vertex). Four pair classes come out of it:

  ordinary0   sublevel component merges, birth < death
  extended0   one point per connected component: (min f, max f)
  relative1   superlevel component merges, reported with birth >= death
  extended1   one point per independent cycle, reported (min, max) with
              birth <= death, matching the cone-complex reduction output

Zero-persistence ordinary0/relative1 pairs are dropped; extended pairs are
kept even on the diagonal (an isolated vertex contributes (f, f)).

``extended_persistence`` is the production path: two union-find passes plus a
component scan, with a boundary reduction restricted to 1-cells for the
extended1 pairing. ``brute_force_extended_persistence`` reduces the full cone
complex column by column and exists to cross-check the fast path on small
graphs. Both share one cell-order function so tie-breaking agrees exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph

PAIR_CLASSES = ("ordinary0", "extended0", "relative1", "extended1")

BRUTE_FORCE_MAX_NODES = 12


@dataclass(frozen=True)
class PersistencePoint:
    birth: float
    death: float
    dim: int
    pair_class: str


class ExtendedPersistenceDiagram:
    def __init__(self, points):
        self.points = list(points)

    def __len__(self):
        return len(self.points)

    def points_for_dim(self, dim: int):
        return [p for p in self.points if p.dim == dim]

    def points_for_class(self, pair_class: str):
        return [p for p in self.points if p.pair_class == pair_class]

    def multiset(self, digits: int = 9):
        """Canonical sorted tuple list for multiset comparison."""
        return sorted((p.dim, p.pair_class, round(p.birth, digits), round(p.death, digits))
                      for p in self.points)

    def dumps(self) -> str:
        """One point per line: dim pair_class birth death (6 decimals)."""
        lines = [f"{d} {c} {b:.6f} {e:.6f}" for d, c, b, e in self.multiset()]
        return "\n".join(lines) + ("\n" if lines else "")

    def dump(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.dumps())


def _filtration_values(g: Graph, f) -> np.ndarray:
    vals = np.asarray(getattr(f, "values", f), dtype=np.float64)
    if vals.shape != (g.num_nodes,):
        raise ValueError(f"filtration has {vals.shape} values for "
                         f"{g.num_nodes} nodes")
    if vals.min() < 0.0 or vals.max() > 1.0:
        raise ValueError("filtration values must lie in [0, 1]")
    return vals


def _ordered_cells(g: Graph, vals: np.ndarray):
    """Canonical cell order shared by the fast path and the oracle.

    Returns (asc_vertices, asc_edges, desc_vertices, desc_edges) where the
    vertex lists hold node ids and the edge lists hold (u, v) with u < v.
    Ascending: by value, vertices before edges at ties, then by id. The edge
    value ascending is max(f(u), f(v)); descending it is min(f(u), f(v)).
    """
    asc_vertices = sorted(range(g.num_nodes), key=lambda v: (vals[v], v))
    asc_edges = sorted(((u, v) for u, v, _ in g.edges),
                       key=lambda e: (max(vals[e[0]], vals[e[1]]), e[0], e[1]))
    desc_vertices = sorted(range(g.num_nodes), key=lambda v: (-vals[v], v))
    desc_edges = sorted(((u, v) for u, v, _ in g.edges),
                        key=lambda e: (-min(vals[e[0]], vals[e[1]]), e[0], e[1]))
    return asc_vertices, asc_edges, desc_vertices, desc_edges


class _UnionFind:
    """Union-find tracking the earliest (elder) birth position per component."""

    def __init__(self, n, birth_pos):
        self.parent = list(range(n))
        self.birth = list(birth_pos)  # position of the creating vertex

    def find(self, v):
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def merge(self, a, b):
        """Union; returns the dying root (younger birth) or None if same set."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return None
        if self.birth[ra] > self.birth[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra  # ra is the elder and survives
        return rb


def extended_persistence(g: Graph, f) -> ExtendedPersistenceDiagram:
    """Extended persistence diagram of (g, f) via the union-find fast path."""
    vals = _filtration_values(g, f)
    asc_vertices, asc_edges, desc_vertices, desc_edges = _ordered_cells(g, vals)
    points = []

    # ascending pass: ordinary0 merge pairs under the elder rule
    asc_pos = [0] * g.num_nodes
    for k, v in enumerate(asc_vertices):
        asc_pos[v] = k
    uf = _UnionFind(g.num_nodes, asc_pos)
    for (u, v) in asc_edges:
        dying = uf.merge(u, v)
        if dying is None:
            continue
        birth = vals[asc_vertices[uf.birth[dying]]]
        death = max(vals[u], vals[v])
        if birth != death:
            points.append(PersistencePoint(birth, death, 0, "ordinary0"))

    # component scan: extended0 points (min f, max f) per component
    comp_min = {}
    comp_max = {}
    for v in range(g.num_nodes):
        r = uf.find(v)
        comp_min[r] = min(comp_min.get(r, 1.0), vals[v])
        comp_max[r] = max(comp_max.get(r, 0.0), vals[v])
    for r in sorted(comp_min):
        points.append(PersistencePoint(comp_min[r], comp_max[r], 0, "extended0"))

    # descending pass: relative1 merge pairs (birth >= death)
    desc_pos = [0] * g.num_nodes
    for k, v in enumerate(desc_vertices):
        desc_pos[v] = k
    duf = _UnionFind(g.num_nodes, desc_pos)
    for (u, v) in desc_edges:
        dying = duf.merge(u, v)
        if dying is None:
            continue
        birth = vals[desc_vertices[duf.birth[dying]]]
        death = min(vals[u], vals[v])
        if birth != death:
            points.append(PersistencePoint(birth, death, 1, "relative1"))

    # extended1 pairs from the cone reduction restricted to 1-cells
    points.extend(_extended1_pairs(vals, asc_edges, desc_vertices, desc_edges))

    return ExtendedPersistenceDiagram(points)


def _extended1_pairs(vals, asc_edges, desc_vertices, desc_edges):
    """Reduce cone-triangle boundaries over the 1-cells of the cone complex.

    Rows are ascending edges (asc order) then cone edges (descending vertex
    order); columns are cone triangles in descending edge order. A final
    pivot on an ascending-edge row pairs that cycle-creating edge with the
    triangle, an extended1 pair; cone-edge pivots reproduce relative1 pairs
    and are skipped here.
    """
    n_edges = len(asc_edges)
    asc_index = {e: k for k, e in enumerate(asc_edges)}
    desc_vpos = {v: k for k, v in enumerate(desc_vertices)}
    pivot_owner = {}
    columns = {}
    out = []
    for (u, v) in desc_edges:
        col = {asc_index[(u, v)], n_edges + desc_vpos[u], n_edges + desc_vpos[v]}
        low = max(col)
        while low in pivot_owner:
            col ^= columns[pivot_owner[low]]
            if not col:
                break
            low = max(col)
        if not col:
            raise AssertionError("cone triangle column reduced to zero")
        pivot_owner[low] = (u, v)
        columns[(u, v)] = col
        if low < n_edges:
            be = asc_edges[low]
            birth_asc = max(vals[be[0]], vals[be[1]])
            death_desc = min(vals[u], vals[v])
            # extended pairs straddle the sweep; reported as (min, max)
            out.append(PersistencePoint(death_desc, birth_asc, 1, "extended1"))
    return out


def sublevel_persistence(g: Graph, f) -> ExtendedPersistenceDiagram:
    """Ordinary sublevel persistence with essential classes capped at 1.0.

    Finite H0 pairs keep the ordinary0 tag; essential H0 classes appear as
    extended0 points (min f, 1.0) and each independent cycle as an extended1
    point (edge value, 1.0).
    """
    vals = _filtration_values(g, f)
    asc_vertices, asc_edges, _, _ = _ordered_cells(g, vals)
    points = []
    asc_pos = [0] * g.num_nodes
    for k, v in enumerate(asc_vertices):
        asc_pos[v] = k
    uf = _UnionFind(g.num_nodes, asc_pos)
    for (u, v) in asc_edges:
        dying = uf.merge(u, v)
        if dying is None:
            # cycle-creating edge: essential H1 class born here
            points.append(PersistencePoint(max(vals[u], vals[v]), 1.0, 1, "extended1"))
            continue
        birth = vals[asc_vertices[uf.birth[dying]]]
        death = max(vals[u], vals[v])
        if birth != death:
            points.append(PersistencePoint(birth, death, 0, "ordinary0"))
    comp_min = {}
    for v in range(g.num_nodes):
        r = uf.find(v)
        comp_min[r] = min(comp_min.get(r, 1.0), vals[v])
    for r in sorted(comp_min):
        points.append(PersistencePoint(comp_min[r], 1.0, 0, "extended0"))
    return ExtendedPersistenceDiagram(points)


def brute_force_extended_persistence(g: Graph, f) -> ExtendedPersistenceDiagram:
    """Textbook Z/2 column reduction of the full cone complex.

    Cells in order: apex, ascending vertices and edges, cone edges, cone
    triangles. Every cell except the apex ends up paired; pairs are
    classified by the kinds of their two cells. Quadratic and intended only
    as an oracle: graphs over 12 nodes are refused.
    """
    if g.num_nodes > BRUTE_FORCE_MAX_NODES:
        raise ValueError(f"brute force oracle is limited to {BRUTE_FORCE_MAX_NODES} "
                         f"nodes, got {g.num_nodes}")
    vals = _filtration_values(g, f)
    asc_vertices, asc_edges, desc_vertices, desc_edges = _ordered_cells(g, vals)

    # global cell table: (kind, payload); apex first, then the two sweeps
    cells = [("apex", None)]
    cells += [("vertex", v) for v in asc_vertices]
    cells += [("edge", e) for e in asc_edges]
    cells += [("cone_edge", v) for v in desc_vertices]
    cells += [("cone_tri", e) for e in desc_edges]
    index = {}
    for k, (kind, payload) in enumerate(cells):
        index[(kind, payload)] = k

    def boundary(kind, payload):
        if kind in ("apex", "vertex"):
            return set()
        if kind == "edge":
            u, v = payload
            return {index[("vertex", u)], index[("vertex", v)]}
        if kind == "cone_edge":
            return {index[("apex", None)], index[("vertex", payload)]}
        u, v = payload
        return {index[("edge", (u, v))], index[("cone_edge", u)],
                index[("cone_edge", v)]}

    pivot_owner = {}
    reduced = {}
    pairs = []
    for j, (kind, payload) in enumerate(cells):
        col = boundary(kind, payload)
        while col:
            low = max(col)
            if low not in pivot_owner:
                break
            col ^= reduced[pivot_owner[low]]
        if col:
            low = max(col)
            pivot_owner[low] = j
            reduced[j] = col
            pairs.append((low, j))

    paired = {i for p in pairs for i in p}
    unpaired = [k for k in range(len(cells)) if k not in paired]
    assert unpaired == [0], f"expected only the apex to survive, got {unpaired}"

    def cell_value(k):
        kind, payload = cells[k]
        if kind == "vertex" or kind == "cone_edge":
            return vals[payload]
        u, v = payload
        if kind == "edge":
            return max(vals[u], vals[v])
        return min(vals[u], vals[v])

    points = []
    for i, j in pairs:
        ki, kj = cells[i][0], cells[j][0]
        bi, dj = cell_value(i), cell_value(j)
        if ki == "vertex" and kj == "edge":
            if bi != dj:
                points.append(PersistencePoint(bi, dj, 0, "ordinary0"))
        elif ki == "vertex" and kj == "cone_edge":
            points.append(PersistencePoint(bi, dj, 0, "extended0"))
        elif ki == "edge" and kj == "cone_tri":
            assert dj <= bi, "extended1 pair straddles the sweep"
            points.append(PersistencePoint(dj, bi, 1, "extended1"))
        elif ki == "cone_edge" and kj == "cone_tri":
            if bi != dj:
                points.append(PersistencePoint(bi, dj, 1, "relative1"))
        else:
            raise AssertionError(f"unexpected pair of cell kinds ({ki}, {kj})")
    return ExtendedPersistenceDiagram(points)
