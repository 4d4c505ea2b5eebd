import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphrank.graphs import (DatasetParseError, DimensionMismatchError, Graph, GraphValidationError,
                              PreferencePair, batch_pairs, build_batch, count_triangles,
                              erdos_renyi_edges, generate_edgecount_dataset,
                              generate_regular_triangles_dataset, generate_triangles_dataset,
                              load_dataset, save_dataset, split_dataset)

from .oracles import triangles_by_trace, triangles_by_triples


def complete(n, gid="k"):
    return Graph(gid, n, [(i, j) for i in range(n) for j in range(i + 1, n)])


@st.composite
def graphs(draw, max_nodes=8, features=False):
    n = draw(st.integers(1, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    feats = None
    if features:
        feats = draw(st.lists(st.lists(st.floats(-5, 5), min_size=2, max_size=2), min_size=n, max_size=n))
    target = draw(st.one_of(st.none(), st.floats(-100, 100)))
    return Graph(f"g{draw(st.integers(0, 10**6))}", n, edges, feats, target)


class TestGraph:
    def test_rejects_out_of_range_edge(self):
        with pytest.raises(GraphValidationError, match="g0"):
            Graph("g0", 3, [(0, 5)])

    def test_rejects_self_loop_and_duplicate(self):
        with pytest.raises(GraphValidationError):
            Graph("a", 3, [(1, 1)])
        with pytest.raises(GraphValidationError):
            Graph("b", 3, [(0, 1), (1, 0)])

    def test_feature_rows_must_match(self):
        with pytest.raises(GraphValidationError):
            Graph("c", 3, [], node_features=[[1.0], [2.0]])

    def test_preference_pair_invariants(self):
        with pytest.raises(ValueError):
            PreferencePair(1, 1)
        with pytest.raises(ValueError):
            PreferencePair(0, 1, 1.5)


class TestBuildBatch:
    def test_two_triangles(self):
        b = build_batch([complete(3, "a"), complete(3, "b")])
        assert b.num_nodes == 6
        assert b.edge_index.shape == (2, 12)
        assert b.segment_ids.tolist() == [0, 0, 0, 1, 1, 1]
        assert b.graph_ids == ("a", "b")
        assert np.all(b.node_features == 1.0) and b.node_features.shape == (6, 1)

    def test_empty(self):
        b = build_batch([])
        assert b.graph_count == 0 and b.num_nodes == 0

    def test_mixed_feature_dims(self):
        g1 = Graph("a", 2, [(0, 1)], node_features=[[1.0], [2.0]])
        g2 = Graph("b", 2, [(0, 1)], node_features=[[1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DimensionMismatchError):
            build_batch([g1, g2])
        with pytest.raises(DimensionMismatchError):
            build_batch([g1, complete(2)])

    def test_pairs_encode_each_graph_once(self):
        gs = [complete(3, "g0"), complete(4, "g1"), complete(2, "g2")]
        batch, local, used = batch_pairs(gs, [(0, 1), (1, 2)])
        assert batch.graph_count == 3
        assert batch.graph_ids == ("g0", "g1", "g2")
        assert local.tolist() == [[0, 1], [1, 2]]
        assert used == [0, 1, 2]

    def test_pairs_subset_reindexed(self):
        gs = [complete(3, f"g{i}") for i in range(5)]
        batch, local, used = batch_pairs(gs, [(4, 1), (1, 4), (3, 1)])
        assert used == [1, 3, 4]
        assert [[used[i] for i in row] for row in local.tolist()] == [[4, 1], [1, 4], [3, 1]]

    @given(st.lists(graphs(), min_size=1, max_size=5))
    @settings(max_examples=60, deadline=None)
    def test_batch_invariants(self, gs):
        b = build_batch(gs)
        seg = b.segment_ids
        assert np.all(np.diff(seg) >= 0)
        assert set(seg.tolist()) == set(range(len(gs)))
        src, dst = b.edge_index
        assert np.array_equal(seg[src], seg[dst])
        assert b.edge_index.shape[1] == 2 * sum(len(g.edges) for g in gs)

    @given(st.lists(graphs(), min_size=2, max_size=5), st.randoms(use_true_random=False))
    @settings(max_examples=40, deadline=None)
    def test_permutation_equivariant(self, gs, rnd):
        perm = list(range(len(gs)))
        rnd.shuffle(perm)
        b = build_batch(gs)
        bp = build_batch([gs[i] for i in perm])
        assert bp.graph_ids == tuple(b.graph_ids[i] for i in perm)
        for new, old in enumerate(perm):
            assert np.array_equal(bp.node_features[bp.segment_ids == new],
                                  b.node_features[b.segment_ids == old])


class TestDatasetIO:
    def test_record_mapping(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"id": "g0", "num_nodes": 3, "edges": [[0, 1], [1, 2], [0, 2]],
                                 "target": 1.0}) + "\n")
        (g,) = load_dataset(p)
        assert g.id == "g0" and g.num_nodes == 3 and g.target == 1.0
        assert count_triangles(g) == 1

    def test_validation_error(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"id": "bad", "num_nodes": 3, "edges": [[0, 5]]}) + "\n")
        with pytest.raises(GraphValidationError, match="bad"):
            load_dataset(p)

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"id": "ok", "num_nodes": 1}) + "\n{not json\n")
        with pytest.raises(DatasetParseError, match=":2:"):
            load_dataset(p)

    def test_order_preserved_at_scale(self, tmp_path):
        gs = generate_triangles_dataset(778, 3, 12, seed=1)
        p = tmp_path / "tri.jsonl"
        save_dataset(gs, p)
        loaded = load_dataset(p)
        assert [g.id for g in loaded] == [g.id for g in gs]

    @given(st.lists(graphs(features=True), max_size=6))
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, tmp_path_factory, gs):
        p = tmp_path_factory.mktemp("rt") / "d.jsonl"
        save_dataset(gs, p)
        loaded = load_dataset(p)
        assert len(loaded) == len(gs)
        assert all(a.same_as(b) for a, b in zip(gs, loaded))


class TestTriangles:
    def test_small_cases(self):
        assert count_triangles(complete(3)) == 1
        assert count_triangles(complete(4)) == 4
        assert count_triangles(Graph("e", 5)) == 0

    def test_random_against_oracles(self):
        rng = np.random.default_rng(7)
        for i in range(20):
            g = Graph(f"r{i}", 10, erdos_renyi_edges(10, 0.5, rng))
            expected = triangles_by_triples(g)
            assert count_triangles(g) == expected
            assert triangles_by_trace(g) == expected

    @given(graphs(max_nodes=9))
    @settings(max_examples=80, deadline=None)
    def test_matches_trace_formula(self, g):
        assert count_triangles(g) == triangles_by_trace(g)


class TestGenerators:
    def test_triangles_targets_and_sizes(self):
        gs = generate_triangles_dataset(60, 3, 20, seed=3)
        assert all(3 <= g.num_nodes <= 20 for g in gs)
        assert all(g.target == count_triangles(g) for g in gs)
        for g in gs:
            if g.num_nodes == 3 and len(g.edges) == 3:
                assert g.target == 1
            if not g.edges:
                assert g.target == 0

    def test_deterministic(self):
        a = generate_triangles_dataset(10, seed=5)
        b = generate_triangles_dataset(10, seed=5)
        assert all(x.same_as(y) for x, y in zip(a, b))

    def test_edgecount(self):
        gs = generate_edgecount_dataset(40, 1, 12, seed=2)
        assert all(g.target == len(g.edges) for g in gs)
        assert all(1 <= g.num_nodes <= 12 for g in gs)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            generate_triangles_dataset(3, 2, 5)
        with pytest.raises(ValueError):
            generate_edgecount_dataset(3, 5, 4)

    def test_regular_graphs_share_degree_sequence(self):
        gs = generate_regular_triangles_dataset(30, seed=0)
        for g in gs:
            deg = g.degrees()
            assert np.all(deg == deg[0])
            assert g.target == count_triangles(g)

    def test_split_sizes_and_disjoint(self):
        gs = generate_edgecount_dataset(100, seed=0)
        tr, va, te = split_dataset(gs, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (80, 10, 10)
        ids = [g.id for g in tr + va + te]
        assert len(set(ids)) == 100
        with pytest.raises(ValueError):
            split_dataset(gs, (0.5, 0.1, 0.1), seed=0)
