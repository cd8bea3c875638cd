"""Graph container, similarity sets, and file-format tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ginigraph.errors import ContractError, DataFormatError, DomainError
from ginigraph.graph import (
    Graph,
    GroupPartition,
    SimilaritySet,
    attr_similarity,
    edges_from_features,
    graph_summary,
    laplacian_apply,
    load_graph,
    normalized_adjacency,
    pair_distance,
    read_edge_list,
    read_embedding_csv,
    read_feature_table,
    read_similarity_csv,
    split_nodes,
    topo_similarity,
    write_edge_list,
    write_embedding_csv,
    write_feature_table,
    write_similarity_csv,
)

from conftest import build_random_similarity


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


def test_graph_validation_rejects_bad_edges():
    base = dict(features=np.zeros((3, 2)), labels=[0, 1, 1], sensitive=[0, 0, 1])
    with pytest.raises(ContractError):
        Graph(edges=[[0, 3]], **base)
    with pytest.raises(ContractError):
        Graph(edges=[[2, 1]], **base)
    with pytest.raises(ContractError):
        Graph(edges=[[0, 1], [0, 1]], **base)


def test_graph_masks_must_be_disjoint():
    with pytest.raises(ContractError):
        Graph(
            edges=[[0, 1]],
            features=np.zeros((3, 2)),
            labels=[0, 1, 1],
            sensitive=[0, 0, 1],
            train_mask=[0, 1],
            val_mask=[1],
        )


def test_adjacency_and_homophily():
    graph = Graph(
        edges=[[0, 1], [1, 2], [0, 3]],
        features=np.zeros((4, 2)),
        labels=[0, 0, 1, -1],
        sensitive=[0, 1, 0, 1],
    )
    adj = graph.adjacency().toarray()
    assert adj[0, 1] == adj[1, 0] == 1.0
    assert adj.sum() == 6.0
    # labeled-both edges: (0,1) same, (1,2) different; (0,3) skipped
    assert graph.homophily() == 0.5


def test_normalized_adjacency_rows_behave():
    graph = Graph(
        edges=[[0, 1]],
        features=np.zeros((2, 1)),
        labels=[0, 1],
        sensitive=[0, 0],
    )
    a_hat = normalized_adjacency(graph).toarray()
    np.testing.assert_allclose(a_hat, np.full((2, 2), 0.5))


def test_split_nodes_covers_labeled_and_is_deterministic(rng):
    labels = np.array([0, 1, -1, 1, 0, 1, -1, 0, 1, 0])
    graph = Graph(
        edges=[[0, 1]],
        features=np.zeros((10, 2)),
        labels=labels,
        sensitive=np.zeros(10, dtype=int),
    )
    train, val, test = split_nodes(graph, (0.5, 0.25, 0.25), seed=3)
    joined = np.sort(np.concatenate([train, val, test]))
    np.testing.assert_array_equal(joined, np.flatnonzero(labels >= 0))
    again = split_nodes(graph, (0.5, 0.25, 0.25), seed=3)
    for a, b in zip((train, val, test), again):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ContractError):
        split_nodes(graph, (0.5, 0.2, 0.2), seed=0)


# ---------------------------------------------------------------------------
# GroupPartition
# ---------------------------------------------------------------------------


def test_partition_compacts_ids_and_restricts():
    part = GroupPartition.from_values([5, 5, 9, 5, 9])
    assert part.m == 2
    np.testing.assert_array_equal(part.members(0), [0, 1, 3])
    np.testing.assert_array_equal(part.sizes(), [3, 2])
    sub = part.restrict([0, 1, 3])
    assert sub.m == 1  # the 9-group vanished, ids re-compacted
    with pytest.raises(ContractError):
        part.members(2)


# ---------------------------------------------------------------------------
# SimilaritySet
# ---------------------------------------------------------------------------


def test_similarity_set_normalizes_and_validates():
    s = SimilaritySet(4, rows=[2, 0], cols=[1, 3], weights=[0.5, 1.0])
    np.testing.assert_array_equal(s.rows, [0, 1])
    np.testing.assert_array_equal(s.cols, [3, 2])
    assert s.weight(1, 2) == 0.5
    assert s.weight(2, 1) == 0.5
    assert s.weight(0, 1) == 0.0
    with pytest.raises(ContractError):
        s.weight(1, 1)
    with pytest.raises(ContractError):
        SimilaritySet(3, [0], [0], [0.5])
    with pytest.raises(ContractError):
        SimilaritySet(3, [0, 1], [1, 0], [0.5, 0.5])
    with pytest.raises(DomainError):
        SimilaritySet(3, [0], [1], [0.0])
    with pytest.raises(DomainError):
        SimilaritySet(3, [0], [1], [1.5])


def test_similarity_degree_matches_dense(rng):
    s = build_random_similarity(rng, 9)
    dense = s.to_dense()
    np.testing.assert_allclose(s.degree, dense.sum(axis=1))
    round_trip = SimilaritySet.from_dense(dense)
    np.testing.assert_allclose(round_trip.to_dense(), dense)


def test_similarity_restrict_matches_dense_slice(rng):
    s = build_random_similarity(rng, 10)
    index = np.array([1, 3, 4, 8])
    sub = s.restrict(index)
    np.testing.assert_allclose(sub.to_dense(), s.to_dense()[np.ix_(index, index)])


def test_laplacian_apply_matches_dense(rng):
    s = build_random_similarity(rng, 8)
    z = rng.normal(size=(8, 3))
    dense = s.to_dense()
    lap = np.diag(dense.sum(axis=1)) - dense
    np.testing.assert_allclose(laplacian_apply(s, z), lap @ z, rtol=1e-12)


def test_pair_distance_fixture_and_guards():
    s = SimilaritySet(3, [0], [1], [0.5])
    assert pair_distance(s, 0, 1, delta=0.0) == 2.0
    assert pair_distance(s, 1, 0, delta=0.0) == 2.0
    np.testing.assert_allclose(pair_distance(s, 0, 1, delta=0.5), 1.0)
    with pytest.raises(DomainError):
        pair_distance(s, 0, 2, delta=0.0)  # absent pair, zero delta
    with pytest.raises(DomainError):
        pair_distance(s, 0, 1, delta=-1.0)


# ---------------------------------------------------------------------------
# Similarity construction
# ---------------------------------------------------------------------------


def brute_cosine(mat):
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    unit = np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)
    cos = unit @ unit.T
    np.fill_diagonal(cos, 0.0)
    return cos


def test_topo_similarity_full_topk_matches_brute_force(rng, graph_factory):
    graph = graph_factory(rng, 12)
    s = topo_similarity(graph, top_k=graph.n)
    cos = brute_cosine(graph.adjacency().toarray())
    expected = np.where(cos > 0, np.minimum(cos, 1.0), 0.0)
    np.testing.assert_allclose(s.to_dense(), expected, atol=1e-12)


def test_topk_keeps_union_of_per_node_selections(rng):
    feats = rng.normal(size=(10, 6))
    k = 2
    s = attr_similarity(feats, top_k=k)
    cos = brute_cosine(feats)
    keep = np.zeros_like(cos, dtype=bool)
    for i in range(10):
        order = np.argsort(-cos[i])
        chosen = [j for j in order if cos[i, j] > 0][:k]
        keep[i, chosen] = True
    keep |= keep.T
    expected = np.where(keep, np.maximum(cos, 0.0), 0.0)
    np.testing.assert_allclose(s.to_dense(), expected, atol=1e-12)


def test_attr_similarity_ignores_masked_columns(rng):
    feats = rng.normal(size=(8, 5))
    altered = feats.copy()
    altered[:, 2] = rng.normal(size=8) * 100
    a = attr_similarity(feats, top_k=8, masked_columns=(2,))
    b = attr_similarity(altered, top_k=8, masked_columns=(2,))
    np.testing.assert_allclose(a.to_dense(), b.to_dense())
    with pytest.raises(ContractError):
        attr_similarity(feats, top_k=8, masked_columns=(7,))


def test_zero_feature_rows_produce_no_pairs():
    feats = np.zeros((4, 3))
    feats[0] = [1.0, 0.0, 0.0]
    s = attr_similarity(feats, top_k=4)
    assert s.num_pairs == 0


def test_edges_from_features_euclidean_and_cosine(rng):
    feats = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [0.0, 1.1]])
    edges = edges_from_features(feats, threshold=1.2, metric="euclidean")
    assert {(int(i), int(j)) for i, j in edges} == {(0, 1), (0, 3), (1, 3)}
    cos_edges = edges_from_features(feats, threshold=0.99, metric="cosine")
    assert {(int(i), int(j)) for i, j in cos_edges} == {(1, 3)}
    with pytest.raises(ContractError):
        edges_from_features(feats, 1.0, metric="manhattan")


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_topo_similarity_is_symmetric_in_storage(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 15))
    i, j = np.triu_indices(n, k=1)
    keep = rng.random(i.size) < 0.4
    if not keep.any():
        keep[0] = True
    graph = Graph(
        edges=np.column_stack([i[keep], j[keep]]),
        features=rng.normal(size=(n, 3)),
        labels=rng.integers(0, 2, size=n),
        sensitive=np.zeros(n, dtype=int),
    )
    s = topo_similarity(graph, top_k=3)
    assert np.all(s.rows < s.cols)
    assert np.all(s.weights > 0) and np.all(s.weights <= 1.0)
    dense = s.to_dense()
    np.testing.assert_array_equal(dense, dense.T)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def test_edge_list_round_trip_and_dedup(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("# comment\n0 1\n2 1   # trailing comment\n1 0\n3 3\n\n2 4\n")
    edges, dropped = read_edge_list(path)
    np.testing.assert_array_equal(edges, [[0, 1], [1, 2], [2, 4]])
    assert dropped == 2  # one duplicate (1 0) and one self-loop (3 3)
    write_edge_list(path, edges)
    again, dropped2 = read_edge_list(path)
    np.testing.assert_array_equal(again, edges)
    assert dropped2 == 0


def test_edge_list_rejects_malformed_lines(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 1 2\n")
    with pytest.raises(DataFormatError, match=":1"):
        read_edge_list(path)
    path.write_text("0 x\n")
    with pytest.raises(DataFormatError):
        read_edge_list(path)
    path.write_text("-1 2\n")
    with pytest.raises(DataFormatError):
        read_edge_list(path)


def test_feature_table_round_trip(tmp_path, rng):
    path = tmp_path / "features.csv"
    feats = rng.normal(size=(5, 3))
    labels = np.array([0, 1, -1, 1, 0])
    sens = np.array([0, 1, 1, 0, 0])
    write_feature_table(path, feats, labels, sens)
    f2, l2, s2 = read_feature_table(path)
    np.testing.assert_array_equal(f2, feats)  # 17 significant digits round-trip
    np.testing.assert_array_equal(l2, labels)
    np.testing.assert_array_equal(s2, sens)


def test_feature_table_rejects_bad_rows(tmp_path):
    path = tmp_path / "features.csv"
    path.write_text("id,label,sensitive,f0\n0,2,0,1.0\n")
    with pytest.raises(DataFormatError, match="label"):
        read_feature_table(path)
    path.write_text("id,label,sensitive,f0\n0,1,0,1.0\n0,0,0,2.0\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        read_feature_table(path)
    path.write_text("id,label,sensitive,f0\n1,1,0,1.0\n")
    with pytest.raises(DataFormatError, match="cover"):
        read_feature_table(path)
    path.write_text("node,label,sensitive,f0\n")
    with pytest.raises(DataFormatError, match="header"):
        read_feature_table(path)


def test_load_graph_checks_edge_bounds(tmp_path, rng):
    write_feature_table(tmp_path / "features.csv", rng.normal(size=(3, 2)), [0, 1, 1], [0, 0, 1])
    (tmp_path / "edges.txt").write_text("0 5\n")
    with pytest.raises(DataFormatError, match="exceeds"):
        load_graph(tmp_path / "edges.txt", tmp_path / "features.csv")
    (tmp_path / "edges.txt").write_text("0 1\n1 2\n")
    graph, dropped = load_graph(tmp_path / "edges.txt", tmp_path / "features.csv")
    assert graph.n == 3 and graph.num_edges == 2 and dropped == 0
    summary = graph_summary(graph)
    assert summary["nodes"] == 3 and summary["labeled_nodes"] == 3


def test_similarity_csv_round_trip_is_exact(tmp_path, rng):
    s = build_random_similarity(rng, 7)
    path = tmp_path / "sim.csv"
    write_similarity_csv(path, s)
    s2 = read_similarity_csv(path, 7)
    np.testing.assert_array_equal(s.rows, s2.rows)
    np.testing.assert_array_equal(s.cols, s2.cols)
    np.testing.assert_array_equal(s.weights, s2.weights)
    with pytest.raises(DataFormatError):
        read_similarity_csv(path, 3)  # index out of range for smaller n


def test_embedding_csv_round_trip(tmp_path, rng):
    z = rng.normal(size=(6, 4))
    path = tmp_path / "emb.csv"
    write_embedding_csv(path, z)
    np.testing.assert_array_equal(read_embedding_csv(path), z)
