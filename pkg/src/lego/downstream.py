"""Tasks built on tangent frames: local views and their rigid alignment into a
global embedding, and boundary detection with a doubly stochastic kernel.

Local dimension profiles live in :mod:`lego.tangent` and are re-exported here.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .dataset import PointCloud
from .errors import AlignmentError, InvalidArgumentError
from .graph import Affinity, NeighborhoodGraph
from .tangent import TangentFrameSet, functional_variance_profile, select_dims  # noqa: F401

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalViews:
    """``coords[j]`` (k, d): coordinates of the neighbors ``members[j]`` in view j."""

    coords: np.ndarray
    members: np.ndarray
    n_points: int

    @property
    def n_views(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[2]

    def incidence(self) -> sparse.csr_matrix:
        """(n_views, n_points) 0/1 membership matrix."""
        nv, k = self.members.shape
        rows = np.repeat(np.arange(nv), k)
        return sparse.csr_matrix((np.ones(rows.size), (rows, self.members.ravel())), shape=(nv, self.n_points))

    def overlap_index(self) -> list[np.ndarray]:
        """For each point, the views that contain it."""
        inc = self.incidence().T.tocsr()
        return [inc.indices[inc.indptr[k]: inc.indptr[k + 1]] for k in range(self.n_points)]


@dataclass(frozen=True)
class RigidAlignment:
    """Per-view orthogonal ``rotations`` (n, d, d) and ``translations`` (n, d).

    A local coordinate ``z`` of view j maps to ``rotations[j].T @ z + translations[j]``.
    """

    rotations: np.ndarray
    translations: np.ndarray
    error: float
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class BoundaryReport:
    norms: np.ndarray
    threshold: float
    labels: np.ndarray
    percentile: float


def build_local_views(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph, frames: TangentFrameSet | np.ndarray) -> LocalViews:
    """Project each neighborhood, centered at its mean, onto the frame of its center."""
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    Q = frames.uniform_frames() if isinstance(frames, TangentFrameSet) else np.asarray(frames, dtype=float)
    nb = X[graph.neighbors]
    centered = nb - nb.mean(axis=1, keepdims=True)
    coords = np.einsum("nkp,npd->nkd", centered, Q)
    return LocalViews(coords, graph.neighbors.copy(), X.shape[0])


def _procrustes(A, B, w=None):
    """Orthogonal ``O`` and ``t`` minimizing ``sum_k w_k |O^T a_k + t - b_k|^2`` (batched, reflections allowed)."""
    if w is None:
        w = np.ones(A.shape[:-1])
    wsum = w.sum(axis=-1, keepdims=True)
    a_bar = np.einsum("...k,...kd->...d", w, A) / wsum
    b_bar = np.einsum("...k,...kd->...d", w, B) / wsum
    Ac = A - a_bar[..., None, :]
    Bc = B - b_bar[..., None, :]
    M = np.einsum("...k,...ka,...kb->...ab", w, Ac, Bc)
    U, _, Vt = np.linalg.svd(M)
    O = U @ Vt
    t = b_bar - np.einsum("...ab,...a->...b", O, a_bar)
    return O, t


def _apply(views: LocalViews, O, t):
    return np.einsum("nka,nab->nkb", views.coords, O) + t[:, None, :]


def _global_coords(views: LocalViews, transformed):
    nv, k, d = transformed.shape
    idx = views.members.ravel()
    counts = np.bincount(idx, minlength=views.n_points)
    sums = np.zeros((views.n_points, d))
    np.add.at(sums, idx, transformed.reshape(-1, d))
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = sums / counts[:, None]
    return Z, counts


def alignment_error(views: LocalViews, O, t) -> float:
    """Sum over points and unordered pairs of views sharing it of squared disagreement."""
    Y = _apply(views, O, t)
    Z, counts = _global_coords(views, Y)
    dev = Y - Z[views.members]
    per_entry = np.einsum("nkd,nkd->nk", dev, dev)
    # sum_{i<j} |y_i - y_j|^2 = c * sum_i |y_i - mean|^2
    return float(np.sum(per_entry * counts[views.members]))


def align_views(views: LocalViews, iters: int = 10) -> tuple[RigidAlignment, np.ndarray]:
    """Rigidly align local views and average them into an (n_points, d) embedding.

    Initialization walks a breadth-first spanning tree of the view-overlap
    graph from the best-connected view, fitting each child to its parent on
    their shared points.  Each refinement round re-fits every view to the
    current averaged coordinates of its points, weighting a point by the
    number of views containing it; this is block-coordinate descent on the
    alignment error, which therefore never increases.
    """
    nv, k, d = views.coords.shape
    inc = views.incidence()
    covered = np.asarray(inc.sum(axis=0)).ravel() > 0
    overlap = (inc @ inc.T).tocsr()
    overlap.setdiag(0)
    overlap.eliminate_zeros()
    ncomp, labels = connected_components(overlap, directed=False)
    if ncomp > 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        raise AlignmentError(f"view overlap graph has {ncomp} components", components=comps)

    warnings = []
    O = np.tile(np.eye(d), (nv, 1, 1))
    t = np.zeros((nv, d))
    # walk only well-determined overlaps (>= d+1 shared points) when they connect every view
    strong = overlap.copy()
    strong.data[strong.data < d + 1] = 0
    strong.eliminate_zeros()
    if connected_components(strong, directed=False)[0] == 1:
        overlap = strong
    degree = np.diff(overlap.indptr)
    root = int(np.argmax(degree))
    seen = np.zeros(nv, dtype=bool)
    seen[root] = True
    queue = deque([root])
    pos = [{int(m): s for s, m in enumerate(views.members[j])} for j in range(nv)]
    while queue:
        parent = queue.popleft()
        parent_global = views.coords[parent] @ O[parent] + t[parent]
        for child in overlap.indices[overlap.indptr[parent]: overlap.indptr[parent + 1]]:
            if seen[child]:
                continue
            seen[child] = True
            shared = [m for m in views.members[child] if int(m) in pos[parent]]
            if len(shared) < d + 1:
                warnings.append(f"views {parent}->{child} share {len(shared)} < d+1 points")
            A = views.coords[child][[pos[child][int(m)] for m in shared]]
            B = parent_global[[pos[parent][int(m)] for m in shared]]
            O[child], t[child] = _procrustes(A, B)
            queue.append(child)

    err = alignment_error(views, O, t)
    history = [err]
    for _ in range(iters):
        if err == 0.0:
            break
        Y = _apply(views, O, t)
        Z, counts = _global_coords(views, Y)
        O_new, t_new = _procrustes(views.coords, Z[views.members], counts[views.members].astype(float))
        new_err = alignment_error(views, O_new, t_new)
        if new_err > err:
            # only floating-point noise can land here
            break
        O, t, err = O_new, t_new, new_err
        history.append(err)
    for w in warnings[:5]:
        log.warning(w)
    Z, _ = _global_coords(views, _apply(views, O, t))
    Z[~covered] = np.nan
    return RigidAlignment(O, t, err, history, warnings), Z


def detect_boundary(cloud: PointCloud | np.ndarray, frames: TangentFrameSet | np.ndarray, ds_kernel: Affinity,
                    percentile: float = 90.0) -> BoundaryReport:
    """Label points whose projected kernel-weighted mean offset is large.

    ``v_j = 1/(n-1) sum_i K_ij Q_j^T (x_i - x_j)`` with ``K`` doubly
    stochastic; points with ``|v_j|`` above the given percentile are boundary.
    """
    if not 0 < percentile < 100:
        raise InvalidArgumentError(f"percentile must be in (0, 100), got {percentile}")
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    Q = frames.uniform_frames() if isinstance(frames, TangentFrameSet) else np.asarray(frames, dtype=float)
    K = ds_kernel.weights
    rows = np.asarray(K.sum(axis=1)).ravel()
    cols = np.asarray(K.sum(axis=0)).ravel()
    dev = max(np.max(np.abs(rows - 1)), np.max(np.abs(cols - 1)))
    if dev > 1e-4:
        raise InvalidArgumentError(f"kernel is not doubly stochastic (row/column sum deviation {dev:.3g})")
    n = X.shape[0]
    KtX = np.asarray(K.T @ X)
    mean_offset = KtX - cols[:, None] * X
    v = np.einsum("npd,np->nd", Q, mean_offset) / (n - 1)
    norms = np.linalg.norm(v, axis=1)
    thr = float(np.percentile(norms, percentile))
    return BoundaryReport(norms, thr, norms > thr, float(percentile))


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    union = np.sum(a | b)
    return 1.0 if union == 0 else float(np.sum(a & b) / union)


def write_embedding(Z: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = Z.shape[1]
    np.savetxt(path, np.column_stack([np.arange(Z.shape[0]), Z]), delimiter=",",
               header=",".join(["index"] + [f"z{i}" for i in range(d)]), comments="", fmt=["%d"] + ["%.17g"] * d)
    return path


def write_boundary(report: BoundaryReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = report.norms.size
    np.savetxt(path, np.column_stack([np.arange(n), report.norms, report.labels.astype(int)]), delimiter=",",
               header="index,norm,label", comments="", fmt=["%d", "%.17g", "%d"])
    return path
