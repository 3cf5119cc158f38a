"""Neighborhood graphs, Gaussian affinities and random-walk graph Laplacians.

Two affinity modes are supported.  ``knn_truncated`` evaluates the kernel on
the union-symmetrized kNN edges (plus the diagonal) and stores a CSR matrix;
``dense`` evaluates it on every pair.  The Laplacian is built as

    A -> K = D^-1 A D^-1 -> L = I - Dn^-1 K

with ``D`` the degrees of ``A`` and ``Dn`` the row sums of ``K``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .dataset import PointCloud
from .errors import ConvergenceError, DegenerateGraphError, InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborhoodGraph:
    """kNN lists, ``neighbors[j]`` sorted by ascending distance (ties by index)."""

    neighbors: np.ndarray
    distances: np.ndarray
    k_nn: int
    includes_self: bool

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]


@dataclass(frozen=True)
class Affinity:
    weights: sparse.csr_matrix | np.ndarray
    bandwidth: float
    mode: str

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def toarray(self) -> np.ndarray:
        return self.weights.toarray() if sparse.issparse(self.weights) else np.asarray(self.weights)


@dataclass(frozen=True)
class LaplacianOperator:
    """Random-walk Laplacian ``L = I - Dn^-1 K``.

    ``kernel`` is the normalized affinity ``K``; ``degrees`` are the row sums
    of the raw affinity and ``normalized_degrees`` the row sums of ``K``.
    """

    matrix: sparse.csr_matrix | np.ndarray
    kernel: sparse.csr_matrix | np.ndarray
    degrees: np.ndarray
    normalized_degrees: np.ndarray
    kind: str = "random_walk"

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if sparse.issparse(self.matrix) else np.asarray(self.matrix)

    def symmetric_kernel(self):
        """``Dn^-1/2 K Dn^-1/2``; its eigenvalues are ``1 - eig(L)``."""
        s = 1.0 / np.sqrt(self.normalized_degrees)
        if sparse.issparse(self.kernel):
            S = sparse.diags(s) @ self.kernel @ sparse.diags(s)
            return ((S + S.T) * 0.5).tocsr()
        S = self.kernel * s[:, None] * s[None, :]
        return 0.5 * (S + S.T)


def _row_distances(points, j, idx):
    diff = points[idx] - points[j]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def knn_graph(cloud: PointCloud | np.ndarray, k_nn: int, includes_self: bool = False) -> NeighborhoodGraph:
    """Exact Euclidean kNN.

    A KD-tree proposes candidates; distances are then recomputed with a fixed
    formula and ordered by (distance, index).  Points whose k-th distance is
    tied with a candidate outside the proposal fall back to a radius query, so
    the result equals a brute-force scan with index tie-breaking.
    """
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = X.shape[0]
    if not 1 <= k_nn < n:
        raise InvalidArgumentError(f"k_nn must satisfy 1 <= k_nn < n (n={n}), got {k_nn}")
    tree = cKDTree(X)
    # one extra for self, one extra to detect ties at the cut
    q = min(n, k_nn + 2)
    _, cand = tree.query(X, k=q)
    cand = np.atleast_2d(cand)
    nbrs = np.empty((n, k_nn), dtype=np.int64)
    dists = np.empty((n, k_nn))
    for j in range(n):
        idx = cand[j]
        idx = idx[idx < n]
        dist = _row_distances(X, j, idx)
        if not includes_self:
            keep = idx != j
            idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        idx, dist = idx[order], dist[order]
        if idx.size > k_nn and dist[k_nn] > dist[k_nn - 1]:
            pass
        elif idx.size < n - (0 if includes_self else 1):
            # tie at the boundary (or too few candidates): widen the search
            radius = dist[min(k_nn, idx.size) - 1]
            idx = np.asarray(tree.query_ball_point(X[j], radius * (1 + 1e-9) + 1e-300), dtype=np.int64)
            dist = _row_distances(X, j, idx)
            if not includes_self:
                keep = idx != j
                idx, dist = idx[keep], dist[keep]
            order = np.lexsort((idx, dist))
            idx, dist = idx[order], dist[order]
        nbrs[j] = idx[:k_nn]
        dists[j] = dist[:k_nn]
    return NeighborhoodGraph(nbrs, dists, k_nn, includes_self)


def brute_force_knn(points, k_nn: int, includes_self: bool = False):
    """O(n^2) reference scan with (distance, index) ordering."""
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    nbrs = np.empty((n, k_nn), dtype=np.int64)
    dists = np.empty((n, k_nn))
    all_idx = np.arange(n)
    for j in range(n):
        dist = _row_distances(X, j, all_idx)
        idx = all_idx
        if not includes_self:
            idx, dist = idx[idx != j], dist[idx != j]
        order = np.lexsort((idx, dist))[:k_nn]
        nbrs[j], dists[j] = idx[order], dist[order]
    return nbrs, dists


def bandwidth_heuristic(graph: NeighborhoodGraph) -> float:
    """``sqrt(2)`` times the median distance to the ``ceil(k/2)``-th neighbor (self excluded)."""
    if graph.n == 0:
        raise InvalidArgumentError("empty graph")
    d = graph.distances
    if graph.includes_self:
        d = np.where(graph.neighbors == np.arange(graph.n)[:, None], np.nan, d)
        d = np.sort(d, axis=1)  # NaNs go last
    col = math.ceil(graph.k_nn / 2) - 1
    return float(np.sqrt(2.0) * np.median(d[:, col]))


def gaussian_kernel(z, s: float):
    """``exp(-|z|^2 / s^2)`` along the last axis."""
    z = np.asarray(z, dtype=float)
    return np.exp(-np.sum(z * z, axis=-1) / s ** 2)


def gaussian_affinity(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph | None, s: float,
                      mode: str = "knn_truncated") -> Affinity:
    if not s > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {s}")
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = X.shape[0]
    if mode == "dense":
        W = np.exp(-cdist(X, X, "sqeuclidean") / s ** 2)
        W = 0.5 * (W + W.T)
        np.fill_diagonal(W, 1.0)
        return Affinity(W, float(s), mode)
    if mode != "knn_truncated":
        raise InvalidArgumentError(f"unknown affinity mode {mode!r}")
    if graph is None:
        raise InvalidArgumentError("knn_truncated mode needs a neighborhood graph")
    rows = np.repeat(np.arange(n), graph.k_nn)
    cols = graph.neighbors.ravel()
    pattern = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    pattern = (pattern + pattern.T + sparse.identity(n, format="csr")).tocsr()
    pattern.sort_indices()
    coo = pattern.tocoo()
    diff = X[coo.row] - X[coo.col]
    w = np.exp(-np.einsum("ij,ij->i", diff, diff) / s ** 2)
    w[coo.row == coo.col] = 1.0
    W = sparse.csr_matrix((w, (coo.row, coo.col)), shape=(n, n))
    W.sort_indices()
    return Affinity(W, float(s), mode)


def _degrees(M) -> np.ndarray:
    return np.asarray(M.sum(axis=1)).ravel()


def normalized_affinity(aff: Affinity) -> Affinity:
    """``K = D^-1 A D^-1`` with ``D`` the degrees of ``A``."""
    d = _degrees(aff.weights)
    if np.any(d <= 0):
        raise DegenerateGraphError(f"{int(np.sum(d <= 0))} node(s) with zero degree")
    inv = 1.0 / d
    if sparse.issparse(aff.weights):
        K = (sparse.diags(inv) @ aff.weights @ sparse.diags(inv)).tocsr()
    else:
        K = aff.weights * inv[:, None] * inv[None, :]
    return Affinity(K, aff.bandwidth, aff.mode)


def random_walk_laplacian(aff: Affinity) -> LaplacianOperator:
    """``L = I - Dn^-1 K`` from a raw Gaussian affinity."""
    d = _degrees(aff.weights)
    K = normalized_affinity(aff).weights
    dn = _degrees(K)
    if np.any(dn <= 0):
        raise DegenerateGraphError("zero normalized degree")
    n = aff.n
    if sparse.issparse(K):
        P = sparse.diags(1.0 / dn) @ K
        L = (sparse.identity(n, format="csr") - P).tocsr()
    else:
        L = np.eye(n) - K / dn[:, None]
    return LaplacianOperator(L, K, d, dn)


def laplacian_deviation(a, b) -> float:
    """Frobenius norm of ``a - b`` (operators or plain matrices)."""
    A = a.matrix if isinstance(a, LaplacianOperator) else a
    B = b.matrix if isinstance(b, LaplacianOperator) else b
    if A.shape != B.shape:
        raise InvalidArgumentError(f"dimension mismatch: {A.shape} vs {B.shape}")
    D = A - B
    if sparse.issparse(D):
        return float(sparse.linalg.norm(D, "fro"))
    return float(np.linalg.norm(np.asarray(D), "fro"))


def sinkhorn_doubly_stochastic(aff: Affinity, tol: float = 1e-8, max_iter: int = 2000) -> Affinity:
    """Symmetric Sinkhorn scaling ``diag(v) A diag(v)`` with unit row sums.

    Uses the damped fixed point ``v <- sqrt(v / (A v))``.
    """
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    A = aff.weights
    r0 = _degrees(A)
    if np.any(r0 <= 0):
        raise DegenerateGraphError("Sinkhorn needs strictly positive rows")
    v = np.ones(aff.n)
    resid = float(np.max(np.abs(r0 - 1.0)))
    it = 0
    while resid > tol:
        if it >= max_iter:
            raise ConvergenceError(f"Sinkhorn did not converge in {max_iter} iterations (residual {resid:.3g})",
                                   residual=resid, iterations=it)
        v = np.sqrt(v / (A @ v))
        it += 1
        resid = float(np.max(np.abs(v * (A @ v) - 1.0)))
    log.debug("sinkhorn converged in %d iterations, residual %.3g", it, resid)
    if it == 0:
        return Affinity(A.copy(), aff.bandwidth, aff.mode)
    if sparse.issparse(A):
        Kd = (sparse.diags(v) @ A @ sparse.diags(v)).tocsr()
    else:
        Kd = A * v[:, None] * v[None, :]
    return Affinity(Kd, aff.bandwidth, aff.mode)


def write_triplets(matrix, path) -> Path:
    """Coordinate-triplet CSV ``i,j,value``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M = matrix.weights if isinstance(matrix, Affinity) else matrix.matrix if isinstance(matrix, LaplacianOperator) else matrix
    coo = sparse.coo_matrix(M)
    data = np.column_stack([coo.row, coo.col, coo.data])
    np.savetxt(path, data, delimiter=",", header="i,j,value", comments="", fmt=["%d", "%d", "%.17g"])
    return path
