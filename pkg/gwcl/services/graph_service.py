"""
Graph Service
Builds the pixel-level similarity graph S = [s_ij] over all non-background
pixels from an exact K-nearest-neighbor search under the diagonal
Mahalanobis metric Sigma = diag([1_beta; sigma_m; sigma_n]).

Three exact backends share one re-ranking step:
  brute  - blocked Gram-matrix distances (BLAS), exact float64 re-rank
  kdtree - scipy cKDTree over Sigma^{-1/2}-scaled features, exact re-rank
  faiss  - flat L2 index in float32 for candidates, exact re-rank
Any row whose candidate cut-off is too close to the K-th exact distance is
recomputed against every node, so all backends return identical graphs.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from gwcl.config import BLOCK_SIZE, progress_disabled
from gwcl.errors import GraphError
from gwcl.services import raw_store
from gwcl.services.features import FeatureMatrix

logger = logging.getLogger("gwcl.graph")

BACKENDS = ("brute", "kdtree", "faiss")
SYMMETRIZE_MODES = ("union", "mutual", "directed")

# Extra candidates fetched beyond K before the exact re-rank
CANDIDATE_MARGIN = 8
# Relative error allowance of each backend's candidate distances
_BACKEND_TOLERANCE = {"brute": 1e-9, "kdtree": 1e-9, "faiss": 1e-4}


@dataclass(frozen=True)
class MetricSpec:
    """Diagonal Mahalanobis metric: unit weights on beta spectral dims, sigma_m / sigma_n on coordinates"""

    beta: int
    sigma_m: float
    sigma_n: float

    def __post_init__(self):
        if self.beta < 0:
            raise GraphError(f"beta must be >= 0, got {self.beta}")
        if not (self.sigma_m > 0 and self.sigma_n > 0):
            raise GraphError(f"sigma_m and sigma_n must be positive, got {self.sigma_m}, {self.sigma_n}")

    @property
    def dim(self) -> int:
        return self.beta + 2

    def diagonal(self) -> np.ndarray:
        return np.concatenate([np.ones(self.beta), [self.sigma_m, self.sigma_n]])

    def inverse_diagonal(self) -> np.ndarray:
        return 1.0 / self.diagonal()


@dataclass
class SparseGraph:
    """CSR similarity graph; weights in (0, 1], no self-loops, sorted column indices"""

    matrix: sp.csr_matrix
    symmetric: bool
    mode: str = "union"
    k: int = 0
    _positions: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def weights(self) -> np.ndarray:
        return self.matrix.data

    def degrees(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    def position_lookup(self) -> np.ndarray:
        """Node -> batch position table, -1 outside the current batch"""
        if self._positions is None or self._positions.size != self.n_nodes:
            self._positions = np.full(self.n_nodes, -1, dtype=np.int64)
        return self._positions

    def save(self, stem: str | Path) -> None:
        stem = raw_store.stem_of(stem)
        raw_store.write_header(stem, {
            "nodes": self.n_nodes,
            "nnz": self.nnz,
            "symmetric": int(self.symmetric),
            "mode": self.mode,
            "k": self.k,
        })
        raw_store.write_array(stem.with_name(stem.name + "_indptr"), self.indptr.astype(np.int64))
        raw_store.write_array(stem.with_name(stem.name + "_indices"), self.indices.astype(np.int32))
        raw_store.write_array(stem.with_name(stem.name + "_weights"), self.weights.astype(np.float64))

    @classmethod
    def load(cls, stem: str | Path) -> "SparseGraph":
        stem = raw_store.stem_of(stem)
        header = raw_store.read_header(stem)
        indptr, _ = raw_store.read_array(stem.with_name(stem.name + "_indptr"))
        indices, _ = raw_store.read_array(stem.with_name(stem.name + "_indices"))
        weights, _ = raw_store.read_array(stem.with_name(stem.name + "_weights"))
        n = int(header["nodes"])
        matrix = sp.csr_matrix((weights, indices, indptr), shape=(n, n))
        return cls(matrix=matrix, symmetric=bool(int(header["symmetric"])), mode=header.get("mode", "union"),
                   k=int(header.get("k", 0)))


def mahalanobis_sq(x_i: np.ndarray, x_j: np.ndarray, metric: MetricSpec) -> float:
    """(x_i - x_j)^T Sigma^{-1} (x_i - x_j)"""
    diff = np.asarray(x_i, dtype=np.float64) - np.asarray(x_j, dtype=np.float64)
    if diff.shape != (metric.dim,):
        raise GraphError(f"Rows must have {metric.dim} entries, got {diff.shape}")
    return float(np.sum(diff * diff * metric.inverse_diagonal()))


def _exact_sq(x: np.ndarray, inv: np.ndarray, query: int, candidates: np.ndarray) -> np.ndarray:
    diff = x[candidates] - x[query]
    return np.sum(diff * diff * inv, axis=1)


def _rank(x, inv, query, candidates, k) -> Tuple[np.ndarray, np.ndarray]:
    """K nearest among candidates by exact distance, ties to the smaller index"""
    d2 = _exact_sq(x, inv, query, candidates)
    order = np.lexsort((candidates, d2))[:k]
    return candidates[order], d2[order]


def _select_row(x, inv, query, candidates, cutoff, tol, k, complete) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact re-rank of one query's candidates

    ``cutoff`` is the backend's (approximate) squared distance of its last
    candidate; every non-candidate lies at or beyond it. When the exact K-th
    distance is not safely below the cut-off, the row is recomputed in full.
    """
    candidates = candidates[(candidates >= 0) & (candidates != query)]
    if not complete:
        nbrs, d2 = _rank(x, inv, query, candidates, k)
        if d2.size == k and d2[-1] < cutoff - tol:
            return nbrs, d2
    everyone = np.arange(x.shape[0])
    return _rank(x, inv, query, everyone[everyone != query], k)


def _brute_block(x, scaled, sqnorm, inv, rows, k, tol_rel):
    n = x.shape[0]
    m = min(k + CANDIDATE_MARGIN, n - 1)
    approx = sqnorm[rows, None] + sqnorm[None, :] - 2.0 * (scaled[rows] @ scaled.T)
    approx[np.arange(rows.size), rows] = np.inf
    complete = m >= n - 1
    part = np.argpartition(approx, m - 1, axis=1)[:, :m]
    out_n = np.empty((rows.size, k), dtype=np.int64)
    out_d = np.empty((rows.size, k), dtype=np.float64)
    top = sqnorm.max()
    for r, q in enumerate(rows):
        cand = part[r]
        cutoff = approx[r, cand].max()
        tol = tol_rel * (sqnorm[q] + top) + 1e-12
        out_n[r], out_d[r] = _select_row(x, inv, q, cand, cutoff, tol, k, complete)
    return out_n, out_d


def _make_searcher(backend: str, x: np.ndarray, scaled: np.ndarray, k: int) -> Callable:
    """Returns block -> (neighbors, sq-distances) for the chosen backend"""
    n = x.shape[0]
    sqnorm = np.sum(scaled * scaled, axis=1)
    top = sqnorm.max()
    tol_rel = _BACKEND_TOLERANCE[backend]
    kk = min(k + 1 + CANDIDATE_MARGIN, n)
    complete = kk >= n

    if backend == "brute":
        def search(rows, inv):
            return _brute_block(x, scaled, sqnorm, inv, rows, k, tol_rel)
        return search

    if backend == "kdtree":
        from scipy.spatial import cKDTree

        tree = cKDTree(scaled)

        def query(points):
            dist, idx = tree.query(points, k=kk, workers=1)
            return np.square(dist), idx
    elif backend == "faiss":
        import faiss

        index = faiss.IndexFlatL2(scaled.shape[1])
        index.add(np.ascontiguousarray(scaled, dtype=np.float32))

        def query(points):
            dist, idx = index.search(np.ascontiguousarray(points, dtype=np.float32), kk)
            return dist.astype(np.float64), idx.astype(np.int64)
    else:
        raise GraphError(f"Unknown K-NN backend '{backend}' (expected one of {BACKENDS})")

    def search(rows, inv):
        dist, idx = query(scaled[rows])
        out_n = np.empty((rows.size, k), dtype=np.int64)
        out_d = np.empty((rows.size, k), dtype=np.float64)
        for r, q in enumerate(rows):
            tol = tol_rel * (sqnorm[q] + top) + 1e-12
            out_n[r], out_d[r] = _select_row(x, inv, q, idx[r], dist[r].max(), tol, k, complete)
        return out_n, out_d

    return search


def knn_neighbors(
    features: FeatureMatrix,
    metric: MetricSpec,
    k: int,
    backend: str = "brute",
    threads: int = 1,
    block_size: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact K nearest neighbors of every node under the metric

    Args:
        features: P x (beta + 2) features
        metric: Diagonal Mahalanobis metric
        k: Neighbors per node, 1 <= k < P
        backend: "brute", "kdtree" or "faiss"
        threads: Worker threads over query blocks
        block_size: Query rows per block

    Returns:
        (neighbors, sq_distances), both P x k, each row sorted by
        (distance, node index); a node is never its own neighbor
    """
    x = np.ascontiguousarray(features.values, dtype=np.float64)
    n = x.shape[0]
    if x.shape[1] != metric.dim:
        raise GraphError(f"Features have {x.shape[1]} columns, metric expects {metric.dim}")
    if not 1 <= k < n:
        raise GraphError(f"K must satisfy 1 <= K < P={n}, got {k}")
    if backend not in BACKENDS:
        raise GraphError(f"Unknown K-NN backend '{backend}' (expected one of {BACKENDS})")

    inv = metric.inverse_diagonal()
    scaled = x * np.sqrt(inv)
    search = _make_searcher(backend, x, scaled, k)

    block = block_size or BLOCK_SIZE
    blocks = [np.arange(s, min(s + block, n)) for s in range(0, n, block)]
    neighbors = np.empty((n, k), dtype=np.int64)
    sq_dist = np.empty((n, k), dtype=np.float64)

    def run(rows):
        neighbors[rows], sq_dist[rows] = search(rows, inv)

    bar = tqdm(total=len(blocks), desc=f"k-NN ({backend})", unit="block", disable=progress_disabled())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for _ in pool.map(run, blocks):
                bar.update(1)
    else:
        for rows in blocks:
            run(rows)
            bar.update(1)
    bar.close()
    return neighbors, sq_dist


def build_similarity(
    features: FeatureMatrix,
    metric: MetricSpec,
    k: int,
    symmetrize: str = "union",
    backend: str = "brute",
    threads: int = 1,
    block_size: Optional[int] = None,
) -> SparseGraph:
    """
    Build S with s_ij = exp(-0.5 * d_M(x_i, x_j)^2) on K-NN pairs

    Args:
        symmetrize: "union" (edge if either endpoint lists the other),
            "mutual" (both must) or "directed" (raw K-NN relation)

    Returns:
        SparseGraph in CSR form
    """
    if symmetrize not in SYMMETRIZE_MODES:
        raise GraphError(f"Unknown symmetrization '{symmetrize}' (expected one of {SYMMETRIZE_MODES})")
    neighbors, sq_dist = knn_neighbors(features, metric, k, backend, threads, block_size)
    n = neighbors.shape[0]

    weights = np.exp(-0.5 * sq_dist).ravel()
    underflow = weights <= 0.0
    if underflow.any():
        logger.warning(f"{int(underflow.sum())} edge weights underflowed; clamped to the smallest positive float")
        weights[underflow] = np.finfo(np.float64).tiny

    rows = np.repeat(np.arange(n), k)
    directed = sp.csr_matrix((weights, (rows, neighbors.ravel())), shape=(n, n))
    if symmetrize == "union":
        matrix = directed.maximum(directed.T).tocsr()
    elif symmetrize == "mutual":
        matrix = directed.minimum(directed.T).tocsr()
    else:
        matrix = directed
    matrix.eliminate_zeros()
    matrix.sort_indices()
    matrix.indices = matrix.indices.astype(np.int32, copy=False)

    graph = SparseGraph(matrix=matrix, symmetric=symmetrize != "directed", mode=symmetrize, k=k)
    logger.info(f"Built graph: {n} nodes, nnz={graph.nnz}, mode={symmetrize}, backend={backend}")
    return graph


def to_indicator(graph: SparseGraph) -> SparseGraph:
    """Same sparsity pattern with unit weights (a_ij = 1 where s_ij > 0)"""
    matrix = graph.matrix.copy()
    matrix.data = np.ones_like(matrix.data)
    return SparseGraph(matrix=matrix, symmetric=graph.symmetric, mode=graph.mode, k=graph.k)


def batch_submatrix(graph: SparseGraph, nodes: np.ndarray) -> sp.csr_matrix:
    """
    |B| x |B| block T with T[p, q] = s_{nodes[p], nodes[q]}

    Raises:
        GraphError: out-of-range or duplicate node index
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= graph.n_nodes):
        raise GraphError(f"Batch index out of range [0, {graph.n_nodes})")
    if np.unique(nodes).size != nodes.size:
        raise GraphError("Batch contains duplicate node indices")
    b = nodes.size
    starts = graph.indptr[nodes].astype(np.int64)
    counts = graph.indptr[nodes + 1].astype(np.int64) - starts
    row_pos = np.repeat(np.arange(b), counts)
    flat = np.repeat(starts - (np.cumsum(counts) - counts), counts) + np.arange(int(counts.sum()))
    cols = graph.indices[flat]
    values = graph.weights[flat]

    lookup = graph.position_lookup()
    lookup[nodes] = np.arange(b)
    try:
        col_pos = lookup[cols]
    finally:
        lookup[nodes] = -1
    keep = col_pos >= 0
    block = sp.csr_matrix((values[keep], (row_pos[keep], col_pos[keep])), shape=(b, b))
    block.sort_indices()
    return block


def graph_stats(graph: SparseGraph) -> Dict[str, object]:
    """nnz, degree histogram and weight quantiles for inspection"""
    degrees = graph.degrees()
    hist = np.bincount(degrees) if degrees.size else np.zeros(1, dtype=np.int64)
    quantiles = (0.0, 0.25, 0.5, 0.75, 1.0)
    values = np.quantile(graph.weights, quantiles) if graph.nnz else np.zeros(len(quantiles))
    return {
        "nodes": graph.n_nodes,
        "nnz": graph.nnz,
        "degree_histogram": {int(d): int(c) for d, c in enumerate(hist) if c},
        "weight_quantiles": dict(zip(quantiles, values.tolist())),
    }
