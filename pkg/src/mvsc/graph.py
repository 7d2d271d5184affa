"""Neighborhood graphs: per-view local/global proximity and their fusion.

The local (first-order) graph of a view puts a Gaussian-kernel weight on
every mutual-k-nearest-neighbor pair; the global (second-order) graph
repeats the construction on the rows of the first-order matrix, so two
samples score high when their neighborhoods agree.  Per-view graphs are
fused by Hadamard products, and the fused graph's Laplacian drives the
coefficient-smoothness regularizer Tr(CᵀLC).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

GRAPH_KINDS = ("first-order", "second-order", "fused")


class DegenerateBandwidthError(ValueError):
    """All pairwise distances collapse, leaving no usable kernel bandwidth."""


class GraphError(ValueError):
    """Malformed graph input (shape, range, or parameter out of bounds)."""


@dataclass(frozen=True)
class ProximityGraph:
    """Symmetric nonnegative similarity matrix with zero diagonal.

    First- and second-order graphs keep entries in [0, 1] and are nonzero
    only on mutual-kNN pairs; fused graphs are sums of entrywise products,
    so their entries stay nonnegative but may reach 2.
    """

    weights: np.ndarray
    kind: str

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"graph weights must be square, got shape {W.shape}")
        if self.kind not in GRAPH_KINDS:
            raise GraphError(f"unknown graph kind {self.kind!r}")
        if not np.all(np.isfinite(W)):
            raise GraphError("graph weights must be finite")
        if not np.array_equal(W, W.T):
            raise GraphError("graph weights must be symmetric")
        if np.any(np.diagonal(W) != 0.0):
            raise GraphError("graph diagonal must be zero")
        if W.min() < 0.0:
            raise GraphError("graph weights must be nonnegative")
        if self.kind != "fused" and W.max() > 1.0:
            raise GraphError(f"{self.kind} graph weights must lie in [0, 1]")
        object.__setattr__(self, "weights", W)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def edge_count(self) -> int:
        """Number of undirected edges (nonzero upper-triangle entries)."""
        return int(np.count_nonzero(np.triu(self.weights, k=1)))


@dataclass(frozen=True)
class GraphLaplacian:
    """L = D - W for the degree matrix D of a symmetric nonnegative W."""

    laplacian: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.laplacian, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise GraphError(f"Laplacian must be square, got shape {L.shape}")
        if not np.array_equal(L, L.T):
            raise GraphError("Laplacian must be symmetric")
        if np.abs(L.sum(axis=1)).max() > 1e-10:
            raise GraphError("Laplacian rows must sum to 0")
        object.__setattr__(self, "laplacian", L)

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]


def pairwise_sqdist(P: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the columns of P.

    Uses the Gram-matrix identity with explicit symmetrization, clamping of
    negative roundoff to 0, and an exactly zero diagonal.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise GraphError(f"point matrix must be 2-D, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise GraphError("point matrix must be finite")
    sq = np.sum(P * P, axis=0)
    D = sq[:, None] + sq[None, :] - 2.0 * (P.T @ P)
    D = 0.5 * (D + D.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def median_bandwidth(D: np.ndarray) -> float:
    """Median of the off-diagonal pairwise Euclidean distances of D.

    D holds squared distances; the median is taken over the n(n-1)/2
    upper-triangle square roots, averaging the two middle values when the
    count is even.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape != (n, n) or n < 2:
        raise GraphError(f"need a square distance matrix with n >= 2, got shape {D.shape}")
    iu = np.triu_indices(n, k=1)
    sigma = float(np.median(np.sqrt(D[iu])))
    if sigma == 0.0:
        raise DegenerateBandwidthError("median pairwise distance is 0 (all points identical)")
    return sigma


def mutual_knn_mask(D: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of pairs that are each other's k nearest neighbors.

    Self is excluded from neighbor lists; distance ties break by ascending
    sample index.  The mask is symmetric with a False diagonal.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if not (1 <= k <= n - 1):
        raise GraphError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
    buf = D.copy()
    np.fill_diagonal(buf, np.inf)
    # stable sort keeps ascending index order among equal distances
    order = np.argsort(buf, axis=1, kind="stable")[:, :k]
    nearest = np.zeros((n, n), dtype=bool)
    np.put_along_axis(nearest, order, True, axis=1)
    return nearest & nearest.T


def _kernel_graph(D: np.ndarray, k: int) -> np.ndarray:
    sigma = median_bandwidth(D)
    mask = mutual_knn_mask(D, k)
    W = np.where(mask, np.exp(-D / (sigma * sigma)), 0.0)
    np.fill_diagonal(W, 0.0)
    return W


def first_order_proximity(X: np.ndarray, k: int) -> ProximityGraph:
    """Gaussian-kernel similarity of sample columns on mutual-kNN pairs.

    W(i,j) = exp(-||X_i - X_j||^2 / sigma^2) when i and j are mutual k
    nearest neighbors (else 0), with sigma the median pairwise distance.
    """
    D = pairwise_sqdist(X)
    return ProximityGraph(weights=_kernel_graph(D, k), kind="first-order")


def second_order_proximity(W: ProximityGraph, k: int) -> ProximityGraph:
    """Neighborhood-profile similarity built on a first-order graph.

    Row i of the first-order weight matrix becomes sample i's feature
    vector; distances, bandwidth, and the mutual-kNN mask are all recomputed
    in that row space.
    """
    if W.kind != "first-order":
        raise GraphError(f"second-order proximity needs a first-order graph, got {W.kind}")
    D = pairwise_sqdist(W.weights.T)  # columns of W.T are the rows of W
    return ProximityGraph(weights=_kernel_graph(D, k), kind="second-order")


def fuse_graphs(
    firsts: list[ProximityGraph],
    seconds: list[ProximityGraph] | None = None,
) -> ProximityGraph:
    """Hadamard-fuse per-view graphs: (⊙_k W_k) + (⊙_k Ŵ_k).

    Passing ``seconds=None`` fuses the first-order graphs alone (the
    local-information-only ablation).  Fewer than n surviving edges trigger
    a warning: consensus products over many views may legitimately kill
    almost every edge, degrading the graph regularizer toward zero.
    """
    if not firsts:
        raise GraphError("need at least one first-order graph to fuse")
    n = firsts[0].n
    for g in list(firsts) + list(seconds or []):
        if g.n != n:
            raise GraphError(f"graph size mismatch: expected {n}x{n}, got {g.n}x{g.n}")
    if seconds is not None and len(seconds) != len(firsts):
        raise GraphError(
            f"got {len(firsts)} first-order but {len(seconds)} second-order graphs"
        )
    fused = np.ones((n, n))
    for g in firsts:
        fused = fused * g.weights
    if seconds is not None:
        second = np.ones((n, n))
        for g in seconds:
            second = second * g.weights
        fused = fused + second
    np.fill_diagonal(fused, 0.0)
    graph = ProximityGraph(weights=fused, kind="fused")
    if graph.edge_count < n:
        warnings.warn(
            f"fused graph keeps only {graph.edge_count} edges for n={n} samples; "
            "the graph regularizer is nearly inactive",
            RuntimeWarning,
            stacklevel=2,
        )
    return graph


def laplacian(W: ProximityGraph) -> GraphLaplacian:
    """L = D - W with D the diagonal matrix of row sums of W."""
    weights = W.weights
    L = np.diag(weights.sum(axis=1)) - weights
    return GraphLaplacian(laplacian=L)


def graph_regularizer(C: np.ndarray, L: GraphLaplacian) -> float:
    """Tr(CᵀLC): for L from a graph, ½ Σ_ij W_ij ||row_i(C) - row_j(C)||²."""
    C = np.asarray(C, dtype=np.float64)
    lap = L.laplacian
    if C.shape[0] != lap.shape[0]:
        raise GraphError(f"C has {C.shape[0]} rows but L is {lap.shape[0]}x{lap.shape[0]}")
    return float(np.sum(C * (lap @ C)))


@dataclass(frozen=True)
class GraphDiagnostics:
    """Construction summary recorded into experiment reports."""

    first_bandwidths: tuple[float, ...]
    second_bandwidths: tuple[float, ...]
    first_edge_counts: tuple[int, ...]
    second_edge_counts: tuple[int, ...]
    fused_edge_count: int

    def to_dict(self) -> dict:
        return {
            "first_bandwidths": list(self.first_bandwidths),
            "second_bandwidths": list(self.second_bandwidths),
            "first_edge_counts": list(self.first_edge_counts),
            "second_edge_counts": list(self.second_edge_counts),
            "fused_edge_count": self.fused_edge_count,
        }


def multiview_graph(
    views: list[np.ndarray] | tuple[np.ndarray, ...],
    k: int,
    include_second: bool = True,
) -> tuple[ProximityGraph, GraphDiagnostics]:
    """Per-view first-order (and optionally second-order) graphs, fused."""
    firsts = [first_order_proximity(X, k) for X in views]
    first_bw = tuple(median_bandwidth(pairwise_sqdist(X)) for X in views)
    seconds = None
    second_bw: tuple[float, ...] = ()
    second_edges: tuple[int, ...] = ()
    if include_second:
        seconds = [second_order_proximity(g, k) for g in firsts]
        second_bw = tuple(median_bandwidth(pairwise_sqdist(g.weights.T)) for g in firsts)
        second_edges = tuple(g.edge_count for g in seconds)
    fused = fuse_graphs(firsts, seconds)
    diag = GraphDiagnostics(
        first_bandwidths=first_bw,
        second_bandwidths=second_bw,
        first_edge_counts=tuple(g.edge_count for g in firsts),
        second_edge_counts=second_edges,
        fused_edge_count=fused.edge_count,
    )
    return fused, diag
