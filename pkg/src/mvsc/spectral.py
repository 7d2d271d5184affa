"""Spectral clustering of a learned coefficient matrix.

Pipeline: symmetrize the coefficients into an affinity ½(|C| + |Cᵀ|),
embed samples with the c bottom eigenvectors of the symmetric normalized
Laplacian (rows rescaled to unit norm), then run k-means with k-means++
seeding and best-of-restarts selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SpectralError(ValueError):
    """Invalid affinity, cluster count, or k-means parameters."""


@dataclass(frozen=True)
class Affinity:
    """Symmetric nonnegative affinity matrix."""

    weights: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.weights, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise SpectralError(f"affinity must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise SpectralError("affinity must be finite")
        if A.min() < 0:
            raise SpectralError("affinity must be nonnegative")
        if np.abs(A - A.T).max() > 1e-12:
            raise SpectralError("affinity must be symmetric")
        object.__setattr__(self, "weights", A)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    """Labels in [0, n_clusters) for every sample."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise SpectralError(f"labels must be a vector, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_clusters):
            raise SpectralError(
                f"labels must lie in [0, {self.n_clusters}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", labels)


def symmetrize_affinity(C: np.ndarray) -> Affinity:
    """A = ½(|C| + |Cᵀ|), symmetric and nonnegative by construction."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise SpectralError(f"coefficient matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise SpectralError("coefficient matrix must be finite")
    absC = np.abs(C)
    return Affinity(weights=0.5 * (absC + absC.T))


def normalized_laplacian(A: Affinity) -> np.ndarray:
    """L_sym = I - D^(-1/2) A D^(-1/2); zero-degree nodes normalize to zero."""
    deg = A.weights.sum(axis=1)
    safe = np.where(deg > 0, deg, 1.0)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(safe), 0.0)
    lsym = np.eye(A.n) - (inv_sqrt[:, None] * A.weights) * inv_sqrt[None, :]
    return 0.5 * (lsym + lsym.T)


def bottom_eigenpairs(A: Affinity, c: int) -> tuple[np.ndarray, np.ndarray]:
    """The c smallest eigenvalues of L_sym and their eigenvectors (columns)."""
    n = A.n
    if not (2 <= c <= n):
        raise SpectralError(f"cluster count must satisfy 2 <= c <= n={n}, got {c}")
    lsym = normalized_laplacian(A)
    try:
        vals, vecs = scipy.linalg.eigh(lsym, subset_by_index=(0, c - 1))
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpectralError(f"eigendecomposition failed: {exc}") from exc
    return vals, vecs


def spectral_embed(A: Affinity, c: int) -> np.ndarray:
    """Rows of the c bottom eigenvectors of L_sym, rescaled to unit norm.

    All-zero rows (nodes absent from every kept eigenvector) stay zero.
    """
    _, vecs = bottom_eigenpairs(A, c)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return np.where(norms > 0, vecs / np.where(norms > 0, norms, 1.0), 0.0)


def _kmeans_pp_centers(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((c, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, c):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:  # all points coincide with chosen centers
            idx = rng.integers(n)
        centers[j] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.argmin(d, axis=1)


def _lloyd(
    points: np.ndarray, centers: np.ndarray, max_iter: int
) -> tuple[np.ndarray, float]:
    c = centers.shape[0]
    labels = _assign(points, centers)
    for _ in range(max_iter):
        for j in range(c):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                # repair: hand the empty cluster the point farthest from its center
                dist = np.sum((points - centers[labels]) ** 2, axis=1)
                runaway = int(np.argmax(dist))
                centers[j] = points[runaway]
                labels[runaway] = j
        new_labels = _assign(points, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    wcss = float(np.sum((points - centers[labels]) ** 2))
    return labels, wcss


def kmeans(
    points: np.ndarray,
    c: int,
    restarts: int = 20,
    seed: int | tuple = 0,
    max_iter: int = 300,
) -> ClusterAssignment:
    """k-means++ / Lloyd with deterministic best-of-restarts selection.

    The winner is the restart with the smallest within-cluster sum of
    squares; ties go to the earliest restart, so results are a pure
    function of (points, c, restarts, seed).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise SpectralError(f"points must be a 2-D array, got shape {points.shape}")
    n = points.shape[0]
    if not (1 <= c <= n):
        raise SpectralError(f"cluster count must satisfy 1 <= c <= n={n}, got {c}")
    if restarts < 1:
        raise SpectralError(f"restarts must be >= 1, got {restarts}")
    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(restarts):
        centers = _kmeans_pp_centers(points, c, rng)
        labels, wcss = _lloyd(points, centers, max_iter)
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return ClusterAssignment(labels=best_labels, n_clusters=c)


def cluster(
    C: np.ndarray,
    c: int,
    restarts: int = 20,
    seed: int | tuple = 0,
) -> ClusterAssignment:
    """Full pipeline: symmetrize -> spectral embedding -> k-means."""
    affinity = symmetrize_affinity(C)
    embedding = spectral_embed(affinity, c)
    return kmeans(embedding, c, restarts=restarts, seed=seed)
