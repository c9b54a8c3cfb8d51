"""Graph encoding, Laplacian weights, permutations, padding, serialization."""

import numpy as np
import pytest

from polymp.errors import InvalidPermutation, TooManyVertices
from polymp.geometry import Polygon
from polymp.graph import (
    PolyGraph,
    encode_graph,
    graph_from_json_line,
    graph_to_json_line,
    laplacian_weights,
    permute_graph,
    to_padded_sequence,
)

SQUARE = Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
SQUARE_WITH_HOLE = Polygon(
    [(0, 0), (1, 0), (1, 1), (0, 1)],
    ([(0.25, 0.25), (0.25, 0.75), (0.75, 0.75), (0.75, 0.25)],),
)


def undirected(g: PolyGraph) -> set:
    return {tuple(e) for e in g.undirected_edges().tolist()}


class TestEncodeGraph:
    def test_square(self):
        g = encode_graph(SQUARE, label=3)
        assert g.n == 4
        assert g.label == 3
        assert np.all(g.nodes[:, 2] == 0)
        assert undirected(g) == {(0, 1), (1, 2), (2, 3), (0, 3)}
        g.validate()

    def test_square_with_hole_two_cycles_no_cross_edges(self):
        g = encode_graph(SQUARE_WITH_HOLE, label=0)
        assert g.n == 8
        assert np.all(g.nodes[:4, 2] == 0)
        assert np.all(g.nodes[4:, 2] == 1)
        edges = undirected(g)
        assert len(edges) == 8
        assert not any(i < 4 <= j or j < 4 <= i for i, j in edges)
        g.validate()

    def test_triangle_degree_two(self):
        g = encode_graph(Polygon([(0, 0), (2, 0), (1, 2)]), label=1)
        deg = np.zeros(3, int)
        for i, _ in g.edges:
            deg[i] += 1
        assert list(deg) == [2, 2, 2]

    def test_cycles_per_ring(self):
        g = encode_graph(SQUARE_WITH_HOLE, label=0)
        # walk each cycle and confirm it covers its ring exactly
        neighbors = {}
        for i, j in undirected(g):
            neighbors.setdefault(i, set()).add(j)
            neighbors.setdefault(j, set()).add(i)
        seen = set()
        cycles = []
        for start in range(g.n):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            prev, cur = start, min(neighbors[start])
            while cur != start:
                cyc.append(cur)
                seen.add(cur)
                nxt = [k for k in neighbors[cur] if k != prev]
                prev, cur = cur, nxt[0]
            cycles.append(sorted(cyc))
        assert cycles == [[0, 1, 2, 3], [4, 5, 6, 7]]


class TestLaplacianWeights:
    def test_ring_weights_exactly_one_third(self):
        for poly in (SQUARE, SQUARE_WITH_HOLE):
            g = encode_graph(poly, 0)
            w = laplacian_weights(g)
            assert np.all(w.edge == 1.0 / 3.0)
            assert np.all(w.self_loop == 1.0 / 3.0)

    def test_incoming_weights_sum_to_one(self):
        g = encode_graph(SQUARE_WITH_HOLE, 0)
        w = laplacian_weights(g)
        incoming = np.zeros(g.n)
        np.add.at(incoming, g.edges[:, 1], w.edge)
        incoming += w.self_loop
        np.testing.assert_allclose(incoming, 1.0)

    def test_symmetric(self):
        g = encode_graph(SQUARE, 0)
        w = laplacian_weights(g)
        lookup = {(int(i), int(j)): x for (i, j), x in zip(g.edges, w.edge)}
        assert all(lookup[(i, j)] == lookup[(j, i)] for (i, j) in lookup)


class TestPermuteGraph:
    def test_identity(self):
        g = encode_graph(SQUARE, 0)
        h = permute_graph(g, np.arange(4))
        assert np.array_equal(h.nodes, g.nodes)
        assert undirected(h) == undirected(g)

    def test_reversal_square(self):
        g = encode_graph(SQUARE, 5)
        h = permute_graph(g, np.array([3, 2, 1, 0]))
        assert h.label == 5
        assert undirected(h) == {(2, 3), (1, 2), (0, 1), (0, 3)}
        # node rows are a permutation of the originals
        assert sorted(map(tuple, h.nodes.tolist())) == sorted(map(tuple, g.nodes.tolist()))

    def test_degree_multiset_invariant(self):
        g = encode_graph(SQUARE_WITH_HOLE, 0)
        rng = np.random.default_rng(0)
        for _ in range(10):
            h = permute_graph(g, rng.permutation(g.n))
            h.validate()

    def test_row_moves_to_perm_position(self):
        g = encode_graph(SQUARE, 0)
        perm = np.array([2, 0, 3, 1])
        h = permute_graph(g, perm)
        for i in range(4):
            assert np.array_equal(h.nodes[perm[i]], g.nodes[i])

    def test_invalid_permutation(self):
        g = encode_graph(SQUARE, 0)
        with pytest.raises(InvalidPermutation):
            permute_graph(g, np.array([0, 0, 1, 2]))
        with pytest.raises(InvalidPermutation):
            permute_graph(g, np.array([0, 1, 2]))


class TestPaddedSequence:
    def test_pad(self):
        g = encode_graph(SQUARE, 0)
        seq = to_padded_sequence(g, 8)
        assert seq.shape == (8, 3)
        assert np.array_equal(seq[:4], g.nodes)
        assert np.all(seq[4:] == 0)

    def test_exact_fit(self):
        g = encode_graph(SQUARE, 0)
        assert np.array_equal(to_padded_sequence(g, 4), g.nodes)

    def test_overflow(self):
        g = encode_graph(SQUARE, 0)
        with pytest.raises(TooManyVertices):
            to_padded_sequence(g, 3)


class TestSerialization:
    def test_json_round_trip(self):
        g = encode_graph(SQUARE_WITH_HOLE, 7)
        line = graph_to_json_line(g)
        h = graph_from_json_line(line)
        assert h.label == 7
        assert np.array_equal(h.nodes, g.nodes)
        assert undirected(h) == undirected(g)
        h.validate()

    def test_canonical_edges(self):
        g = encode_graph(SQUARE, 0)
        und = g.undirected_edges()
        assert np.all(und[:, 0] < und[:, 1])
        assert np.array_equal(und, np.array(sorted(map(tuple, und.tolist()))))
