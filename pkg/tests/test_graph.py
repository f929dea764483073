import numpy as np
import pytest
import scipy.sparse as sp

from replaygraph import (Graph, graph_from_edges, induced_subgraph,
                         normalize_adjacency, propagate)
from replaygraph.graph import GraphFormatError


def path_graph(n, feature_dim=2):
    edges = [(i, i + 1) for i in range(n - 1)]
    features = np.arange(n * feature_dim, dtype=np.float64).reshape(n, feature_dim)
    labels = np.zeros(n, dtype=np.int64)
    return graph_from_edges(n, edges, features, labels, class_count=1)


class TestGraphValidation:
    def test_roundtrip_counts(self):
        g = path_graph(4)
        assert g.num_nodes == 4
        assert g.num_edges == 3
        assert g.feature_dim == 2

    def test_offsets_must_be_nondecreasing(self):
        with pytest.raises(GraphFormatError, match="non-decreasing"):
            Graph(np.array([0, 2, 1, 2]), np.array([1, 0]),
                  np.zeros((3, 1)), np.zeros(3, dtype=np.int64), 1)

    def test_offsets_must_cover_neighbors(self):
        with pytest.raises(GraphFormatError):
            Graph(np.array([0, 1, 2, 5]), np.array([1, 0]),
                  np.zeros((3, 1)), np.zeros(3, dtype=np.int64), 1)

    def test_neighbor_out_of_range(self):
        with pytest.raises(GraphFormatError, match="neighbor"):
            Graph(np.array([0, 1, 2]), np.array([1, 7]),
                  np.zeros((2, 1)), np.zeros(2, dtype=np.int64), 1)

    def test_label_out_of_range(self):
        with pytest.raises(GraphFormatError, match="label"):
            Graph(np.array([0, 1, 2]), np.array([1, 0]),
                  np.zeros((2, 1)), np.array([0, 3]), 2)

    def test_asymmetric_adjacency_rejected(self):
        with pytest.raises(GraphFormatError, match="symmetric"):
            Graph(np.array([0, 1, 1]), np.array([1]),
                  np.zeros((2, 1)), np.zeros(2, dtype=np.int64), 1)

    def test_from_edges_symmetrizes_dedupes_and_drops_self_loops(self):
        g = graph_from_edges(3, [(0, 1), (1, 0), (0, 1), (2, 2)],
                             np.zeros((3, 1)), np.zeros(3, dtype=np.int64), 1)
        assert g.num_edges == 1
        assert len(g.csr_neighbors) == 2
        assert g.adjacency()[2, 2] == 0


class TestNormalizeAdjacency:
    def test_single_node(self):
        g = graph_from_edges(1, [], np.ones((1, 1)), np.zeros(1, dtype=np.int64), 1)
        s = normalize_adjacency(g)
        assert np.allclose(s.matrix.toarray(), [[1.0]])

    def test_two_node_edge(self):
        g = path_graph(2)
        s = normalize_adjacency(g)
        assert np.allclose(s.matrix.toarray(), 0.5 * np.ones((2, 2)))

    def test_three_node_path_entry(self):
        g = path_graph(3)
        s = normalize_adjacency(g)
        assert np.isclose(s.matrix[0, 1], 1.0 / np.sqrt(6.0))

    def test_symmetry(self, rng):
        g = random_graph(rng, 20)
        s = normalize_adjacency(g).matrix
        assert abs(s - s.T).max() < 1e-12

    def test_spectral_radius_at_most_one(self, rng):
        for trial in range(5):
            g = random_graph(np.random.default_rng(trial), 20)
            dense = normalize_adjacency(g).matrix.toarray()
            radius = max(abs(np.linalg.eigvalsh(dense)))
            assert radius <= 1.0 + 1e-6


def random_graph(rng, n):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.2]
    return graph_from_edges(n, edges, rng.standard_normal((n, 3)),
                            rng.integers(0, 2, n), class_count=2)


class TestPropagate:
    def test_zero_steps_is_identity(self, rng):
        g = random_graph(rng, 8)
        s = normalize_adjacency(g)
        out = propagate(s, g.features, 0)
        assert np.array_equal(out.values, g.features)
        assert out.depth == 0

    def test_two_node_average(self):
        g = path_graph(2)
        s = normalize_adjacency(g)
        out = propagate(s, np.array([[0.0], [2.0]]), 1)
        assert np.allclose(out.values, [[1.0], [1.0]])

    def test_complete_graph_idempotent(self):
        g = graph_from_edges(3, [(0, 1), (0, 2), (1, 2)], np.ones((3, 1)),
                             np.zeros(3, dtype=np.int64), 1)
        s = normalize_adjacency(g)
        x = np.array([[1.0], [2.0], [3.0]])
        once = propagate(s, x, 1).values
        twice = propagate(s, x, 2).values
        assert np.allclose(once, twice)

    def test_composition(self, rng):
        g = random_graph(rng, 12)
        s = normalize_adjacency(g)
        x = rng.standard_normal((12, 4))
        direct = propagate(s, x, 5).values
        staged = propagate(s, propagate(s, x, 2).values, 3).values
        assert np.allclose(direct, staged, atol=1e-10)

    def test_dimension_mismatch(self):
        g = path_graph(3)
        s = normalize_adjacency(g)
        with pytest.raises(ValueError):
            propagate(s, np.zeros((2, 4)), 1)

    def test_negative_depth(self):
        g = path_graph(3)
        s = normalize_adjacency(g)
        with pytest.raises(ValueError):
            propagate(s, g.features, -1)


class TestInducedSubgraph:
    def test_all_nodes_preserves_structure(self, rng):
        g = random_graph(rng, 10)
        sub, mapping = induced_subgraph(g, list(range(10)))
        assert sub.num_edges == g.num_edges
        assert np.array_equal(sub.labels, g.labels)
        assert mapping == {i: i for i in range(10)}

    def test_single_node(self):
        g = path_graph(4)
        sub, mapping = induced_subgraph(g, [2])
        assert sub.num_nodes == 1
        assert sub.num_edges == 0
        assert np.array_equal(sub.features, g.features[[2]])

    def test_path_keeping_endpoints_drops_edges(self):
        g = path_graph(3)
        sub, _ = induced_subgraph(g, [0, 2])
        assert sub.num_nodes == 2
        assert sub.num_edges == 0

    def test_labels_follow_nodes(self):
        g = graph_from_edges(3, [(0, 1)], np.zeros((3, 1)), np.array([0, 1, 2]), 3)
        sub, mapping = induced_subgraph(g, [1, 2])
        assert sub.labels[mapping[1]] == 1
        assert sub.labels[mapping[2]] == 2

    def test_symmetry_preserved(self, rng):
        g = random_graph(rng, 15)
        sub, _ = induced_subgraph(g, [0, 2, 4, 6, 8])
        adj = sub.adjacency()
        assert (adj != adj.T).nnz == 0

    def test_empty_set_rejected(self):
        g = path_graph(3)
        with pytest.raises(ValueError):
            induced_subgraph(g, [])
