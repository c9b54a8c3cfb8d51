"""Graph encoding of polygons: node features, ring-topology edges, weights.

A polygon becomes a graph whose nodes are its vertices, carrying
(x, y, ring_flag) features, and whose edges connect consecutive vertices
along each ring (plus the closing edge). Rings stay disconnected from each
other. Edges are materialized in both directions so message passing can
iterate source -> target uniformly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGraph, InvalidPermutation, TooManyVertices
from .geometry import Polygon

EXTERIOR_FLAG = 0.0
HOLE_FLAG = 1.0


@dataclass(frozen=True)
class PolyGraph:
    """Immutable graph: node features (n, 3), directed edge list (e, 2), label."""

    nodes: np.ndarray
    edges: np.ndarray
    label: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        edges = np.asarray(self.edges, dtype=np.int64)
        if edges.size == 0:
            edges = edges.reshape(0, 2)
        nodes = nodes.copy()
        edges = edges.copy()
        nodes.flags.writeable = False
        edges.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def validate(self) -> None:
        """Check the ring-graph invariants; raises InvalidGraph on failure."""
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise InvalidGraph(f"nodes must be (n, 3), got {self.nodes.shape}")
        if not np.all(np.isin(self.nodes[:, 2], (EXTERIOR_FLAG, HOLE_FLAG))):
            raise InvalidGraph("ring flags must be exactly 0 or 1")
        if self.edges.ndim != 2 or self.edges.shape[1] != 2:
            raise InvalidGraph(f"edges must be (e, 2), got {self.edges.shape}")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise InvalidGraph("edge index out of range")
        pairs = {(int(i), int(j)) for i, j in self.edges}
        if any((j, i) not in pairs for i, j in pairs):
            raise InvalidGraph("edge set is not symmetric")
        neighbors = [set() for _ in range(self.n)]
        for i, j in pairs:
            neighbors[i].add(j)
        if any(len(nb) != 2 for nb in neighbors):
            raise InvalidGraph("every node must have exactly 2 distinct neighbors")

    def undirected_edges(self) -> np.ndarray:
        """Each undirected edge once, canonical (i < j), sorted."""
        if self.edges.size == 0:
            return np.zeros((0, 2), dtype=np.int64)
        lo = np.minimum(self.edges[:, 0], self.edges[:, 1])
        hi = np.maximum(self.edges[:, 0], self.edges[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0)
        return und


@dataclass(frozen=True)
class EdgeWeights:
    """Normalized-Laplacian coefficients aligned with PolyGraph.edges,
    plus one self-loop weight per node."""

    edge: np.ndarray
    self_loop: np.ndarray


def encode_graph(poly: Polygon, label: int) -> PolyGraph:
    """Encode a polygon: exterior nodes first (flag 0), then holes (flag 1).

    Edges connect consecutive vertices within each ring plus the closing
    edge; there are no edges between rings. Inputs are normally normalized
    polygons, but any coordinates are accepted (raw-coordinate experiments
    rely on this).
    """
    rows = []
    edges = []
    start = 0
    for ring_idx, ring in enumerate(poly.rings()):
        flag = EXTERIOR_FLAG if ring_idx == 0 else HOLE_FLAG
        k = len(ring)
        rows.append(np.column_stack([ring, np.full(k, flag)]))
        for i in range(k):
            u = start + i
            v = start + (i + 1) % k
            edges.append((u, v))
            edges.append((v, u))
        start += k
    return PolyGraph(np.vstack(rows), np.array(edges, dtype=np.int64), int(label))


def laplacian_weights(g: PolyGraph) -> EdgeWeights:
    """Edge weights a~_ij / sqrt(d~_i * d~_j) from the self-loop-augmented
    adjacency, plus the per-node self-loop weight 1 / d~_i.

    On ring graphs every augmented degree is 3, so every weight is exactly 1/3.
    """
    deg = np.ones(g.n, dtype=np.float64)  # self loop
    np.add.at(deg, g.edges[:, 0], 1.0)
    src, dst = g.edges[:, 0], g.edges[:, 1]
    edge = 1.0 / np.sqrt(deg[src] * deg[dst])
    self_loop = 1.0 / deg
    return EdgeWeights(edge=edge, self_loop=self_loop)


def permute_graph(g: PolyGraph, perm) -> PolyGraph:
    """Relabel nodes: node i moves to position perm[i], edges follow; the
    label is unchanged."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise InvalidPermutation(f"not a bijection on 0..{g.n - 1}")
    nodes = np.empty_like(g.nodes)
    nodes[perm] = g.nodes
    edges = perm[g.edges]
    return PolyGraph(nodes, edges, g.label)


def to_padded_sequence(g: PolyGraph, max_len: int) -> np.ndarray:
    """Node rows in storage order, zero-padded to (max_len, 3)."""
    if g.n > max_len:
        raise TooManyVertices(f"graph has {g.n} nodes, max_len is {max_len}")
    out = np.zeros((max_len, 3), dtype=np.float64)
    out[: g.n] = g.nodes
    return out


def graph_to_record(g: PolyGraph) -> dict:
    """JSON-serializable record; undirected edges stored once, canonical i<j."""
    return {
        "label": int(g.label),
        "flags": [int(f) for f in g.nodes[:, 2]],
        "coords": [[float(x), float(y)] for x, y in g.nodes[:, :2]],
        "edges": [[int(i), int(j)] for i, j in g.undirected_edges()],
    }


def graph_from_record(rec: dict) -> PolyGraph:
    coords = np.asarray(rec["coords"], dtype=np.float64)
    flags = np.asarray(rec["flags"], dtype=np.float64)
    if coords.ndim != 2 or len(coords) != len(flags):
        raise InvalidGraph("coords and flags disagree")
    nodes = np.column_stack([coords, flags])
    und = np.asarray(rec["edges"], dtype=np.int64).reshape(-1, 2)
    edges = np.vstack([und, und[:, ::-1]]) if und.size else und
    return PolyGraph(nodes, edges, int(rec["label"]))


def graph_to_json_line(g: PolyGraph) -> str:
    return json.dumps(graph_to_record(g))


def graph_from_json_line(line: str) -> PolyGraph:
    return graph_from_record(json.loads(line))
