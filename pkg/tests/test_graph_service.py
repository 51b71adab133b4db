import numpy as np
import pytest
import scipy.sparse as sp

from gwcl.errors import GraphError
from gwcl.services.features import FeatureMatrix
from gwcl.services.graph_service import (
    MetricSpec,
    SparseGraph,
    batch_submatrix,
    build_similarity,
    graph_stats,
    knn_neighbors,
    mahalanobis_sq,
    to_indicator,
)

IP_METRIC = MetricSpec(beta=20, sigma_m=0.04, sigma_n=0.001)


def _dense_sq(x, metric):
    diff = x[:, None, :] - x[None, :, :]
    return np.sum(diff * diff * metric.inverse_diagonal(), axis=2)


def _oracle_neighbors(x, metric, k):
    d2 = _dense_sq(x, metric)
    n = x.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        order = np.lexsort((others, d2[i, others]))
        out[i] = others[order[:k]]
    return out


def _line(*positions):
    values = np.zeros((len(positions), 3))
    values[:, 0] = positions
    return FeatureMatrix(values=values, beta=1)


def _backends():
    backends = ["brute", "kdtree"]
    try:
        import faiss  # noqa: F401
        backends.append("faiss")
    except ImportError:
        pass
    return backends


def test_mahalanobis_examples():
    unit = MetricSpec(beta=1, sigma_m=1.0, sigma_n=1.0)
    assert mahalanobis_sq([0.3, 0.1, 0.2], [0.3, 0.1, 0.2], unit) == 0.0
    assert mahalanobis_sq([0, 0, 0], [1, 0, 0], unit) == 1.0
    spatial = MetricSpec(beta=1, sigma_m=0.04, sigma_n=0.001)
    assert mahalanobis_sq([0, 0, 0], [0, 0.2, 0.1], spatial) == pytest.approx(11.0, rel=1e-12)


def test_metric_rejects_non_positive_sigma():
    with pytest.raises(GraphError):
        MetricSpec(beta=2, sigma_m=0.0, sigma_n=1.0)


@pytest.mark.parametrize("backend", _backends())
def test_collinear_points(backend):
    neighbors, _ = knn_neighbors(_line(0.0, 1.0, 10.0), MetricSpec(1, 1.0, 1.0), k=1, backend=backend)
    np.testing.assert_array_equal(neighbors[:, 0], [1, 0, 1])


@pytest.mark.parametrize("backend", _backends())
def test_distance_ties_go_to_the_smaller_index(backend):
    neighbors, d2 = knn_neighbors(_line(0.0, 0.0, 0.0, 5.0), MetricSpec(1, 1.0, 1.0), k=1, backend=backend)
    np.testing.assert_array_equal(neighbors[:, 0], [1, 0, 0, 0])
    np.testing.assert_array_equal(d2[:, 0], [0.0, 0.0, 0.0, 25.0])


@pytest.mark.parametrize("backend", _backends())
def test_neighbors_match_brute_force_scan(random_points, backend):
    features = FeatureMatrix(values=random_points, beta=20)
    neighbors, d2 = knn_neighbors(features, IP_METRIC, k=10, backend=backend, block_size=64)
    np.testing.assert_array_equal(neighbors, _oracle_neighbors(random_points, IP_METRIC, 10))
    assert np.all(np.diff(d2, axis=1) >= 0)
    assert not np.any(neighbors == np.arange(500)[:, None])


def test_threads_do_not_change_the_result(random_points):
    features = FeatureMatrix(values=random_points, beta=20)
    one, _ = knn_neighbors(features, IP_METRIC, k=10, threads=1, block_size=50)
    four, _ = knn_neighbors(features, IP_METRIC, k=10, threads=4, block_size=50)
    np.testing.assert_array_equal(one, four)


def test_k_must_be_below_node_count():
    with pytest.raises(GraphError):
        knn_neighbors(_line(0.0, 1.0), MetricSpec(1, 1.0, 1.0), k=2)


def test_graph_matches_dense_construction():
    rng = np.random.default_rng(3)
    x = rng.random((300, 7))
    metric = MetricSpec(beta=5, sigma_m=0.5, sigma_n=0.2)
    graph = build_similarity(FeatureMatrix(values=x, beta=5), metric, k=6)

    d2 = _dense_sq(x, metric)
    directed = np.zeros_like(d2)
    for i, row in enumerate(_oracle_neighbors(x, metric, 6)):
        directed[i, row] = np.exp(-0.5 * d2[i, row])
    expected = np.maximum(directed, directed.T)
    assert np.max(np.abs(graph.matrix.toarray() - expected)) <= 1e-12


def test_graph_structure_by_mode(random_points):
    features = FeatureMatrix(values=random_points, beta=20)
    union = build_similarity(features, IP_METRIC, k=10, symmetrize="union")
    mutual = build_similarity(features, IP_METRIC, k=10, symmetrize="mutual")
    directed = build_similarity(features, IP_METRIC, k=10, symmetrize="directed")

    for graph in (union, mutual):
        assert abs(graph.matrix - graph.matrix.T).max() == 0
    assert np.all(directed.degrees() == 10)
    assert np.all(union.degrees() >= 10)
    assert np.all(union.degrees() <= 20)
    assert np.all(mutual.degrees() <= 10)
    for graph in (union, mutual, directed):
        assert np.all(graph.weights > 0) and np.all(graph.weights <= 1)
        assert graph.matrix.diagonal().sum() == 0
        assert graph.indices.dtype == np.int32
    # every mutual edge is a union edge
    assert set(zip(*mutual.matrix.nonzero())) <= set(zip(*union.matrix.nonzero()))


def test_edge_weights():
    metric = MetricSpec(beta=1, sigma_m=0.04, sigma_n=0.001)
    pair = FeatureMatrix(values=np.array([[0.0, 0.0, 0.0], [0.0, 0.2, 0.1]]), beta=1)
    graph = build_similarity(pair, metric, k=1)
    assert graph.matrix[0, 1] == pytest.approx(np.exp(-5.5), rel=1e-12)
    assert graph.matrix[0, 1] == pytest.approx(4.0868e-3, rel=1e-4)

    coincident = build_similarity(_line(0.0, 0.0, 3.0), MetricSpec(1, 1.0, 1.0), k=1)
    assert coincident.matrix[0, 1] == 1.0


def test_wider_spectral_scale_raises_the_weight():
    pair = FeatureMatrix(values=np.array([[0.0, 0.0, 0.0], [0.2, 0.1, 0.1]]), beta=1)
    narrow = build_similarity(pair, MetricSpec(1, 0.04, 0.5), k=1)
    wide = build_similarity(pair, MetricSpec(1, 0.08, 0.5), k=1)
    assert 0 < narrow.matrix[0, 1] < wide.matrix[0, 1]
    assert wide.matrix[0, 1] == pytest.approx(np.exp(-0.5 * (0.04 + 0.01 / 0.08 + 0.01 / 0.5)), rel=1e-12)


def test_far_pairs_are_absent():
    graph = build_similarity(_line(0.0, 0.1, 10.0, 10.1), MetricSpec(1, 1.0, 1.0), k=1)
    assert graph.matrix[0, 2] == 0
    assert graph.nnz == 4


def test_indicator_keeps_the_pattern():
    metric = MetricSpec(beta=1, sigma_m=0.04, sigma_n=0.001)
    pair = FeatureMatrix(values=np.array([[0.0, 0.0, 0.0], [0.0, 0.2, 0.1]]), beta=1)
    graph = build_similarity(pair, metric, k=1)
    indicator = to_indicator(graph)
    assert indicator.nnz == graph.nnz
    assert np.all(indicator.weights == 1.0)

    empty = SparseGraph(matrix=sp.csr_matrix((3, 3)), symmetric=True)
    assert to_indicator(empty).nnz == 0


def test_batch_blocks():
    rng = np.random.default_rng(4)
    x = rng.random((1500, 6))
    graph = build_similarity(FeatureMatrix(values=x, beta=4), MetricSpec(4, 0.3, 0.3), k=8)
    dense = graph.matrix.toarray()

    single = batch_submatrix(graph, np.array([17]))
    assert single.shape == (1, 1) and single.nnz == 0

    i = 0
    j = int(graph.indices[graph.indptr[0]])
    pair = batch_submatrix(graph, np.array([i, j])).toarray()
    assert pair[0, 1] == pair[1, 0] == dense[i, j]
    assert pair[0, 0] == pair[1, 1] == 0

    nodes = rng.choice(1500, size=512, replace=False)
    np.testing.assert_array_equal(batch_submatrix(graph, nodes).toarray(), dense[np.ix_(nodes, nodes)])


def test_directed_batch_blocks_match_dense_slices():
    rng = np.random.default_rng(5)
    x = rng.random((400, 5))
    graph = build_similarity(FeatureMatrix(values=x, beta=3), MetricSpec(3, 0.3, 0.3), k=5,
                             symmetrize="directed")
    dense = graph.matrix.toarray()
    for size in (64, 64, 200, 0):
        nodes = rng.choice(400, size=size, replace=False)
        block = batch_submatrix(graph, nodes)
        assert block.has_sorted_indices
        np.testing.assert_array_equal(block.toarray(), dense[np.ix_(nodes, nodes)])
    assert np.all(graph.position_lookup() == -1)


def test_batch_index_errors():
    graph = build_similarity(_line(0.0, 1.0, 2.0), MetricSpec(1, 1.0, 1.0), k=1)
    with pytest.raises(GraphError):
        batch_submatrix(graph, np.array([0, 3]))
    with pytest.raises(GraphError):
        batch_submatrix(graph, np.array([1, 1]))


def test_graph_file_and_stats(tmp_path, random_points):
    graph = build_similarity(FeatureMatrix(values=random_points, beta=20), IP_METRIC, k=10)
    graph.save(tmp_path / "graph")
    loaded = SparseGraph.load(tmp_path / "graph")
    assert (loaded.matrix != graph.matrix).nnz == 0
    assert loaded.mode == "union" and loaded.k == 10

    stats = graph_stats(loaded)
    assert stats["nnz"] == graph.nnz
    assert sum(stats["degree_histogram"].values()) == 500
    assert min(stats["degree_histogram"]) >= 10
