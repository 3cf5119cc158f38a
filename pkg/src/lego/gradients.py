"""Gradients of Laplacian eigenvectors by local least squares, restricted to the
span of the low-frequency eigenvectors.

For point ``j`` with neighbors ``N_j`` the offsets ``Xc_j`` (k x p) and the
eigenvector differences ``f_i[N_j] - f_i[j]`` give a raw local gradient
``g_i(j) = pinv(Xc_j) (f_i[N_j] - f_i[j])``.  Every ambient component of the
gradient field is then projected onto ``span(U)`` where ``U`` is the
orthonormal basis of the first ``m0`` eigenvectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataset import PointCloud
from .errors import DegeneratePatchError, InvalidArgumentError
from .graph import NeighborhoodGraph
from .spectral import SpectralBasis


@dataclass(frozen=True)
class CenteredPatch:
    j: int
    offsets: np.ndarray
    pinv: np.ndarray
    rank: int


@dataclass(frozen=True)
class CenteredPatches:
    """Stacked patches: ``offsets`` (n, k, p), ``pinv`` (n, p, k), ``rank`` (n,)."""

    offsets: np.ndarray
    pinv: np.ndarray
    rank: np.ndarray
    neighbors: np.ndarray

    def __len__(self):
        return self.offsets.shape[0]

    def __getitem__(self, j) -> CenteredPatch:
        return CenteredPatch(int(j), self.offsets[j], self.pinv[j], int(self.rank[j]))


@dataclass(frozen=True)
class GradientField:
    """``gradients[j]`` is the p x m matrix of estimated eigenvector gradients at point j."""

    gradients: np.ndarray
    m0: int

    @property
    def m(self) -> int:
        return self.gradients.shape[2]

    @property
    def n(self) -> int:
        return self.gradients.shape[0]


def truncated_pinv(A: np.ndarray, rcond: float = 1e-8):
    """Batched SVD pseudoinverse of ``A`` (..., k, p) dropping ``s < rcond * s_max``.

    Returns the (..., p, k) pseudoinverses and the numerical ranks.
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = rcond * s[..., :1]
    keep = s > cutoff
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = np.einsum("...ji,...j,...kj->...ik", Vt, inv_s, U)
    return pinv, keep.sum(axis=-1)


def center_patches(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph, rcond: float = 1e-8) -> CenteredPatches:
    if not 0 < rcond < 1:
        raise InvalidArgumentError(f"rcond must be in (0, 1), got {rcond}")
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    offsets = X[graph.neighbors] - X[:, None, :]
    zero = ~np.any(offsets != 0, axis=(1, 2))
    if np.any(zero):
        raise DegeneratePatchError(int(np.flatnonzero(zero)[0]))
    pinv, rank = truncated_pinv(offsets, rcond)
    return CenteredPatches(offsets, pinv, rank, graph.neighbors)


def raw_gradients(patches: CenteredPatches, values: np.ndarray) -> np.ndarray:
    """Local least-squares gradients of the columns of ``values`` (n, m) -> (n, p, m)."""
    F = np.asarray(values, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    diffs = F[patches.neighbors] - F[:, None, :]
    return np.einsum("npk,nkm->npm", patches.pinv, diffs)


def project_field(field: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Project each ambient component of an (n, p, m) field onto ``span(U)``."""
    n = field.shape[0]
    flat = field.reshape(n, -1)
    return (U @ (U.T @ flat)).reshape(field.shape)


def estimate_gradients(patches: CenteredPatches, basis: SpectralBasis, m: int,
                       solver: str = "projected") -> GradientField:
    """Gradients of the first ``m`` eigenvectors of ``basis`` at every point.

    ``solver="projected"`` is the closed form: raw local gradients projected
    onto ``span(U)``.  ``solver="exact"`` instead minimizes
    ``sum_j |Xc_j Theta u_j - df_j|^2`` over coefficient matrices ``Theta``
    (p x m0) directly; the two agree when all patches share the same Gram
    matrix ``Xc_j^T Xc_j`` and differ slightly otherwise.
    """
    if not 1 <= m <= basis.m0:
        raise InvalidArgumentError(f"need 1 <= m <= m0 = {basis.m0}, got m = {m}")
    Phi = basis.eigenvectors[:, :m]
    U = basis.orthobasis
    if solver == "projected":
        G = project_field(raw_gradients(patches, Phi), U)
    elif solver == "exact":
        G = _exact_gradients(patches, Phi, U)
    else:
        raise InvalidArgumentError(f"unknown solver {solver!r}")
    return GradientField(G, basis.m0)


def _exact_gradients(patches: CenteredPatches, Phi: np.ndarray, U: np.ndarray) -> np.ndarray:
    n, k, p = patches.offsets.shape
    m0 = U.shape[1]
    gram = np.einsum("nkc,nkd->ncd", patches.offsets, patches.offsets)
    # normal operator M[(c,a),(d,b)] = sum_j gram_j[c,d] U[j,a] U[j,b]
    M = np.empty((p, m0, p, m0))
    for c in range(p):
        for d in range(c, p):
            block = U.T @ (gram[:, c, d][:, None] * U)
            M[c, :, d, :] = block
            M[d, :, c, :] = block.T
    M = M.reshape(p * m0, p * m0)
    diffs = Phi[patches.neighbors] - Phi[:, None, :]
    rhs_local = np.einsum("nkc,nki->nci", patches.offsets, diffs)  # Xc_j^T df_ij
    rhs = np.einsum("nci,na->cai", rhs_local, U).reshape(p * m0, -1)
    try:
        theta = scipy.linalg.solve(M, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        theta = np.linalg.lstsq(M, rhs, rcond=None)[0]
    theta = theta.reshape(p, m0, -1)
    return np.einsum("cai,na->nci", theta, U)


def gradient_objective(patches: CenteredPatches, values: np.ndarray, theta: np.ndarray, U: np.ndarray) -> float:
    """``(1/n) sum_j |Xc_j Theta u_j - df_j|^2`` for one function ``values`` (n,)."""
    grads = U @ theta.T  # (n, p)
    df = values[patches.neighbors] - values[:, None]
    resid = np.einsum("nkp,np->nk", patches.offsets, grads) - df
    return float(np.mean(np.sum(resid ** 2, axis=1)))


def write_gradients(field: GradientField, path) -> Path:
    """Row per point: ``index`` then the p x m block flattened row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, p, m = field.gradients.shape
    cols = ["index"] + [f"g{a}_{i}" for a in range(p) for i in range(m)]
    data = np.column_stack([np.arange(n), field.gradients.reshape(n, -1)])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="",
               fmt=["%d"] + ["%.17g"] * (p * m))
    return path
