import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from promptgnn.errors import IngestionError, IntegrityError, SamplingError
from promptgnn.graphs import (
    Graph, contextual_subgraph, induced_subgraph, parse_tu_dataset,
    sample_kshot_task, whole_graph_subgraph,
)
from promptgnn.synthetic import make_demo_collection, write_tu_dataset


def bfs_distances(edges, num_nodes, source):
    """Independent shortest-path oracle via plain BFS over an adjacency dict."""
    adj = {i: set() for i in range(num_nodes)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def random_graph(rng, n, p=0.3):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph(num_nodes=n, edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
                 features=rng.standard_normal((n, 3)))


class TestGraphType:
    def test_edges_are_deduped_and_canonical(self):
        g = Graph(num_nodes=3, edges=np.array([[1, 0], [0, 1], [2, 1]]),
                  features=np.zeros((3, 1)))
        np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])
        assert g.has_edge(1, 0) and not g.has_edge(0, 2)

    def test_rejects_self_loop(self):
        with pytest.raises(IntegrityError):
            Graph(num_nodes=2, edges=np.array([[1, 1]]), features=np.zeros((2, 1)))

    def test_rejects_out_of_range_edge(self):
        with pytest.raises(IntegrityError):
            Graph(num_nodes=2, edges=np.array([[0, 5]]), features=np.zeros((2, 1)))

    def test_rejects_feature_row_mismatch(self):
        with pytest.raises(IntegrityError):
            Graph(num_nodes=3, edges=np.zeros((0, 2)), features=np.zeros((2, 1)))


class TestContextualSubgraph:
    def test_zero_hops_is_singleton(self, path5_graph):
        s = contextual_subgraph(path5_graph, 3, 0)
        np.testing.assert_array_equal(s.nodes, [3])
        assert s.edges.shape == (0, 2)

    def test_triangle_one_hop_is_whole_graph(self, triangle_graph):
        for v in range(3):
            s = contextual_subgraph(triangle_graph, v, 1)
            np.testing.assert_array_equal(s.nodes, [0, 1, 2])
            assert s.edges.shape[0] == 3

    def test_path_matches_bfs_oracle(self, path5_graph):
        s = contextual_subgraph(path5_graph, 2, 1)
        dist = bfs_distances(path5_graph.edges.tolist(), 5, 2)
        expected = sorted(u for u, d in dist.items() if d <= 1)
        np.testing.assert_array_equal(s.nodes, expected)
        np.testing.assert_array_equal(s.edges, [[1, 2], [2, 3]])

    def test_out_of_range_node(self, path5_graph):
        with pytest.raises(IndexError):
            contextual_subgraph(path5_graph, 9, 1)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), delta=st.integers(0, 4),
           v=st.integers(0, 7))
    def test_matches_bfs_oracle_and_monotone(self, seed, delta, v):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 8)
        s = contextual_subgraph(g, v, delta)
        dist = bfs_distances(g.edges.tolist(), 8, v)
        expected = sorted(u for u, d in dist.items() if d <= delta)
        np.testing.assert_array_equal(s.nodes, expected)
        assert v in s.nodes
        wider = contextual_subgraph(g, v, delta + 1)
        assert set(s.nodes) <= set(wider.nodes)
        # induced-edge closure, both directions
        node_set = set(s.nodes.tolist())
        for u, w in s.edges:
            assert u in node_set and w in node_set
        for u, w in g.edges:
            if u in node_set and w in node_set:
                assert any((u, w) == (a, b) for a, b in s.edges.tolist())

    def test_whole_graph_subgraph(self, triangle_graph):
        s = whole_graph_subgraph(triangle_graph)
        np.testing.assert_array_equal(s.nodes, [0, 1, 2])
        assert s.edges.shape[0] == 3

    def test_induced_rejects_bad_nodes(self, triangle_graph):
        with pytest.raises(IndexError):
            induced_subgraph(triangle_graph, [0, 7])


class TestTuParsing:
    def test_roundtrip_preserves_structure(self, tmp_path):
        coll = make_demo_collection(num_graphs=6, seed=3)
        write_tu_dataset(coll, tmp_path / "DEMO", "DEMO")
        parsed = parse_tu_dataset(tmp_path / "DEMO", "DEMO")
        assert len(parsed) == 6
        assert parsed.feature_dim == coll.feature_dim
        assert parsed.graph_class_count == coll.graph_class_count
        assert parsed.node_class_count == coll.node_class_count
        for orig, back in zip(coll.graphs, parsed.graphs):
            assert back.num_nodes == orig.num_nodes
            np.testing.assert_array_equal(back.edges, orig.edges)
            np.testing.assert_allclose(back.features, orig.features)
            np.testing.assert_array_equal(back.node_labels, orig.node_labels)
            assert back.graph_label == orig.graph_label

    def test_parse_is_idempotent(self, tmp_path):
        coll = make_demo_collection(num_graphs=4, seed=9)
        write_tu_dataset(coll, tmp_path / "D", "D")
        a = parse_tu_dataset(tmp_path / "D", "D")
        b = parse_tu_dataset(tmp_path / "D", "D")
        assert a.same_structure(b)

    def test_two_graph_fixture_from_files(self, tmp_path, two_graph_fixture):
        write_tu_dataset(two_graph_fixture, tmp_path / "T", "T")
        parsed = parse_tu_dataset(tmp_path / "T", "T")
        assert len(parsed) == 2
        assert parsed.graph_class_count == 2
        assert {g.num_edges for g in parsed.graphs} == {3, 1}

    def test_missing_mandatory_file_named(self, tmp_path):
        d = tmp_path / "X"
        d.mkdir()
        (d / "X_graph_indicator.txt").write_text("1\n1\n")
        (d / "X_graph_labels.txt").write_text("1\n")
        with pytest.raises(IngestionError, match="X_A.txt"):
            parse_tu_dataset(d, "X")

    def test_row_count_mismatch_reports_line(self, tmp_path):
        coll = make_demo_collection(num_graphs=3, seed=1)
        d = write_tu_dataset(coll, tmp_path / "Y", "Y")
        labels = (d / "Y_node_labels.txt").read_text().splitlines()
        (d / "Y_node_labels.txt").write_text("\n".join(labels[:-2]) + "\n")
        with pytest.raises(IntegrityError, match=r"Y_node_labels.txt line \d+"):
            parse_tu_dataset(d, "Y")

    def test_label_features_when_no_attributes(self, tmp_path, two_graph_fixture):
        d = write_tu_dataset(two_graph_fixture, tmp_path / "Z", "Z")
        (d / "Z_node_attributes.txt").unlink()
        parsed = parse_tu_dataset(d, "Z")
        assert parsed.feature_dim == 2  # one-hot over the two node labels
        for g in parsed.graphs:
            np.testing.assert_array_equal(g.features.sum(axis=1), np.ones(g.num_nodes))

    def test_constant_feature_when_no_labels_either(self, tmp_path, two_graph_fixture):
        d = write_tu_dataset(two_graph_fixture, tmp_path / "W", "W")
        (d / "W_node_attributes.txt").unlink()
        (d / "W_node_labels.txt").unlink()
        parsed = parse_tu_dataset(d, "W")
        assert parsed.feature_dim == 1
        assert parsed.node_class_count is None
        np.testing.assert_array_equal(parsed.graphs[0].features, np.ones((3, 1)))


class TestKShotSampling:
    def test_counts_node_level(self):
        coll = make_demo_collection(num_graphs=12, seed=0)
        task = sample_kshot_task(coll, "node", k=1, query_per_class=1, rng_seed=5)
        assert len(task.support) == 3 and len(task.query) == 3

    def test_counts_graph_level(self):
        coll = make_demo_collection(num_graphs=48, seed=0, num_graph_classes=6)
        task = sample_kshot_task(coll, "graph", k=5, query_per_class=2, rng_seed=1)
        assert len(task.support) == 30

    def test_seed_replay_identical(self):
        coll = make_demo_collection(num_graphs=10, seed=2)
        t1 = sample_kshot_task(coll, "node", 2, query_per_class=4, rng_seed=7)
        t2 = sample_kshot_task(coll, "node", 2, query_per_class=4, rng_seed=7)
        assert t1.support == t2.support and t1.query == t2.query

    def test_insufficient_class_names_class(self, two_graph_fixture):
        with pytest.raises(SamplingError, match="class 0"):
            sample_kshot_task(two_graph_fixture, "graph", k=1, query_per_class=1,
                              rng_seed=0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000), k=st.integers(1, 3))
    def test_disjointness_and_counts_hold_for_every_seed(self, seed, k):
        coll = make_demo_collection(num_graphs=14, seed=4)
        task = sample_kshot_task(coll, "node", k, query_per_class=3, rng_seed=seed)
        support_ids = {x for x, _ in task.support}
        query_ids = {x for x, _ in task.query}
        assert not (support_ids & query_ids)
        for cls in task.classes:
            assert sum(1 for _, y in task.support if y == cls) == k
