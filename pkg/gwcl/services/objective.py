"""
Objective
Graph-weighted contrastive loss over positive pairs, summed cross-entropy
on labeled rows, and their lambda-weighted combination, each returning the
gradient with respect to the softmax outputs z.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from gwcl.errors import ConfigError

logger = logging.getLogger("gwcl.objective")

SIMILARITY_KINDS = ("gaussian", "indicator", "graph")
LOG_FLOOR = 1e-12


@dataclass
class PairSet:
    """Unordered positive pairs (p < q) of a batch with their graph weights"""

    p: np.ndarray
    q: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.p.size)

    @classmethod
    def from_block(cls, block: sp.spmatrix, kind: str = "graph") -> "PairSet":
        """
        Pairs from the non-zeros of a batch similarity block (upper triangle)

        A directed block is folded first, so an edge in either direction
        yields the pair with weight max(s_pq, s_qp).
        kind "graph" keeps s_pq; "indicator" and "gaussian" use unit weights.
        """
        if kind not in SIMILARITY_KINDS:
            raise ConfigError(f"Unknown similarity kind '{kind}' (expected one of {SIMILARITY_KINDS})")
        block = sp.csr_matrix(block)
        upper = sp.triu(block.maximum(block.T), k=1).tocoo()
        keep = upper.data > 0
        p, q, w = upper.row[keep], upper.col[keep], upper.data[keep]
        order = np.lexsort((q, p))
        p, q, w = p[order].astype(np.int64), q[order].astype(np.int64), w[order].astype(np.float64)
        if kind != "graph":
            w = np.ones_like(w)
        return cls(p=p, q=q, weights=w)


@dataclass
class LossReport:
    l_gwcl: float
    l_ce: float
    total: float
    pair_count: int
    labeled_count: int
    lam: float

    def as_row(self, step: int) -> str:
        return f"{step},{self.l_gwcl:.10g},{self.l_ce:.10g},{self.total:.10g},{self.pair_count}"


def pair_similarity(z_i: np.ndarray, z_j: np.ndarray, weight: float = 1.0, kind: str = "graph") -> float:
    """
    exp(-w * ||z_i - z_j||^2) with w = 1 (gaussian), a_ij (indicator) or s_ij (graph)
    """
    if kind not in SIMILARITY_KINDS:
        raise ConfigError(f"Unknown similarity kind '{kind}'")
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ValueError(f"z vectors differ in shape: {z_i.shape} vs {z_j.shape}")
    if weight < 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    if kind == "gaussian":
        w = 1.0
    elif kind == "indicator":
        w = 1.0 if weight > 0 else 0.0
    else:
        w = float(weight)
    diff = z_i - z_j
    return float(np.exp(-w * np.dot(diff, diff)))


class EmptyPairCounter:
    """Counts batches that had no positive pairs"""

    def __init__(self):
        self.count = 0

    def hit(self) -> None:
        self.count += 1
        logger.debug(f"Batch without positive pairs (total {self.count})")


empty_pairs = EmptyPairCounter()


def gwcl_loss(z: np.ndarray, pairs: PairSet):
    """
    L = (1/|P|) sum over pairs of s_pq ||z_p - z_q||^2, i.e. -mean log f_graph

    Returns:
        (loss, dL/dz); an empty pair set gives (0, zeros)
    """
    grad = np.zeros_like(z, dtype=np.float64)
    if len(pairs) == 0:
        empty_pairs.hit()
        return 0.0, grad
    diff = z[pairs.p] - z[pairs.q]
    sq = np.sum(diff * diff, axis=1)
    n = len(pairs)
    loss = float(np.dot(pairs.weights, sq) / n)
    contrib = (2.0 / n) * pairs.weights[:, None] * diff
    np.add.at(grad, pairs.p, contrib)
    np.add.at(grad, pairs.q, -contrib)
    return loss, grad


def ce_loss(z_labeled: np.ndarray, targets: np.ndarray):
    """
    L = -sum_i sum_k t_ik log z_ik (summed, not averaged), log floored at 1e-12

    Returns:
        (loss, dL/dz_labeled)
    """
    z_safe = np.maximum(z_labeled, LOG_FLOOR)
    loss = float(-np.sum(targets * np.log(z_safe)))
    grad = -targets / z_safe
    return loss, grad


def one_hot(classes: np.ndarray, c: int) -> np.ndarray:
    """Class codes 1..c to an l x c one-hot matrix"""
    t = np.zeros((classes.size, c))
    t[np.arange(classes.size), np.asarray(classes, dtype=np.int64) - 1] = 1.0
    return t


def total_loss(gwcl, ce, lam: float, labeled_rows: np.ndarray, pair_count: int = 0):
    """
    L = L_gwcl + lambda * L_ce

    Args:
        gwcl: (loss, dL/dz over the batch)
        ce: (loss, dL/dz over the labeled rows only)
        lam: Trade-off lambda >= 0
        labeled_rows: Batch row of each labeled sample, in ce's order
        pair_count: |P| for the report

    Returns:
        (LossReport, combined dL/dz over the batch)
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    l_gwcl, g_gwcl = gwcl
    l_ce, g_ce = ce
    grad = np.array(g_gwcl, dtype=np.float64, copy=True)
    if len(labeled_rows):
        grad[labeled_rows] += lam * g_ce
    report = LossReport(
        l_gwcl=l_gwcl,
        l_ce=l_ce,
        total=l_gwcl + lam * l_ce,
        pair_count=pair_count,
        labeled_count=len(labeled_rows),
        lam=lam,
    )
    return report, grad
