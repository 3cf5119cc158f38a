"""Tangent frames from eigenvector gradients (LEGO) and from local PCA."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import PointCloud
from .errors import DegenerateFrameError, InvalidArgumentError
from .gradients import GradientField, center_patches, estimate_gradients
from .graph import NeighborhoodGraph
from .spectral import SpectralBasis


@dataclass(frozen=True)
class DimPolicy:
    """Either a fixed dimension ``d`` or an explained-variance threshold ``f_var``."""

    d: int | None = None
    f_var: float | None = None

    def __post_init__(self):
        if (self.d is None) == (self.f_var is None):
            raise InvalidArgumentError("give exactly one of d or f_var")
        if self.f_var is not None and not 0 < self.f_var < 1:
            raise InvalidArgumentError(f"f_var must be in (0, 1), got {self.f_var}")
        if self.d is not None and self.d < 1:
            raise InvalidArgumentError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class TangentFrameSet:
    """Per-point orthonormal bases.

    ``bases`` is an (n, p, p) array of ordered principal directions; point
    ``j`` uses its first ``dims[j]`` columns.  ``profiles`` holds the
    normalized squared singular values (descending, summing to one).
    """

    bases: np.ndarray
    dims: np.ndarray
    profiles: np.ndarray
    method: str
    hyperparams: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.bases.shape[0]

    @property
    def p(self) -> int:
        return self.bases.shape[1]

    def frame(self, j: int) -> np.ndarray:
        return self.bases[j, :, : self.dims[j]]

    @property
    def frames(self) -> list[np.ndarray]:
        return [self.frame(j) for j in range(self.n)]

    def uniform_frames(self) -> np.ndarray:
        """(n, p, d) stack; requires a common dimension."""
        d = np.unique(self.dims)
        if d.size != 1:
            raise InvalidArgumentError("frames have varying dimensions")
        return self.bases[:, :, : int(d[0])]

    def projectors(self) -> np.ndarray:
        P = np.zeros((self.n, self.p, self.p))
        for d in np.unique(self.dims):
            sel = self.dims == d
            Q = self.bases[sel, :, :d]
            P[sel] = Q @ np.swapaxes(Q, 1, 2)
        return P


def select_dims(profiles: np.ndarray, policy: DimPolicy) -> np.ndarray:
    n, p = profiles.shape
    if policy.d is not None:
        if policy.d > p:
            raise InvalidArgumentError(f"d = {policy.d} exceeds ambient dimension {p}")
        return np.full(n, policy.d, dtype=int)
    cum = np.cumsum(profiles, axis=1)
    # smallest s with cumulative share >= f_var
    dims = 1 + np.argmax(cum >= policy.f_var - 1e-15, axis=1)
    dims[cum[:, -1] < policy.f_var - 1e-15] = p
    return dims.astype(int)


def _profiles(sq: np.ndarray, p: int) -> np.ndarray:
    sq = np.clip(sq, 0.0, None)
    if sq.shape[1] < p:
        sq = np.concatenate([sq, np.zeros((sq.shape[0], p - sq.shape[1]))], axis=1)
    sq = sq[:, :p]
    total = sq.sum(axis=1, keepdims=True)
    return sq / total


def frames_from_gradients(field: GradientField, policy: DimPolicy, hyperparams=None) -> TangentFrameSet:
    G = field.gradients
    n, p, m = G.shape
    norms = np.linalg.norm(G.reshape(n, -1), axis=1)
    if np.any(norms == 0):
        raise DegenerateFrameError(int(np.flatnonzero(norms == 0)[0]))
    U, s, _ = np.linalg.svd(G, full_matrices=True)
    profiles = _profiles(s ** 2, p)
    dims = select_dims(profiles, policy)
    return TangentFrameSet(U, dims, profiles, "lego", dict(hyperparams or {}))


def lego_frames(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph, basis: SpectralBasis, m: int,
                dim_policy: DimPolicy, rcond: float = 1e-8, solver: str = "projected") -> TangentFrameSet:
    """Orthogonalize the estimated gradients of the first ``m`` eigenvectors at each point."""
    patches = center_patches(cloud, graph, rcond)
    field = estimate_gradients(patches, basis, m, solver=solver)
    hp = {"k_nn": graph.k_nn, "m": m, "m0": basis.m0, "d": dim_policy.d, "f_var": dim_policy.f_var}
    return frames_from_gradients(field, dim_policy, hp)


def local_covariances(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph) -> np.ndarray:
    """``C_j = sum_s (x_s - mu_j)(x_s - mu_j)^T`` over the neighbors of j (neighborhood mean ``mu_j``)."""
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    nb = X[graph.neighbors]
    centered = nb - nb.mean(axis=1, keepdims=True)
    return np.einsum("nka,nkb->nab", centered, centered)


def lpca_frames(cloud: PointCloud | np.ndarray, graph: NeighborhoodGraph, dim_policy: DimPolicy) -> TangentFrameSet:
    C = local_covariances(cloud, graph)
    evals, evecs = np.linalg.eigh(C)
    evals, evecs = evals[:, ::-1], evecs[:, :, ::-1]
    if np.any(evals[:, 0] <= 0):
        raise DegenerateFrameError(int(np.flatnonzero(evals[:, 0] <= 0)[0]))
    profiles = _profiles(evals, C.shape[1])
    dims = select_dims(profiles, dim_policy)
    hp = {"k_nn": graph.k_nn, "d": dim_policy.d, "f_var": dim_policy.f_var}
    return TangentFrameSet(np.ascontiguousarray(evecs), dims, profiles, "lpca", hp)


def functional_variance_profile(frames: TangentFrameSet) -> np.ndarray:
    """Mean normalized spectrum over points, one entry per principal direction."""
    return frames.profiles.mean(axis=0)


def write_frames(frames: TangentFrameSet, directory, prefix: str) -> dict[str, Path]:
    """Flattened frames (row-major p x d_j per point, padded with blanks), dims and profile."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"frames": directory / f"{prefix}_frames.csv", "dims": directory / f"{prefix}_dims.csv",
             "profile": directory / f"{prefix}_profile.json", "bases": directory / f"{prefix}_bases.csv"}
    n, p = frames.n, frames.p
    dmax = int(frames.dims.max())
    flat = np.full((n, p * dmax), np.nan)
    for j in range(n):
        q = frames.frame(j)
        flat[j, : q.size] = q.ravel()
    cols = ["index"] + [f"q{a}_{i}" for a in range(p) for i in range(dmax)]
    with open(paths["frames"], "w") as fh:
        fh.write(",".join(cols) + "\n")
        for j in range(n):
            vals = [f"{v:.17g}" for v in flat[j] if not np.isnan(v)]
            fh.write(",".join([str(j)] + vals) + "\n")
    np.savetxt(paths["dims"], np.column_stack([np.arange(n), frames.dims]), delimiter=",",
               header="index,dim", comments="", fmt="%d")
    np.savetxt(paths["bases"], np.column_stack([frames.bases.reshape(n, -1), frames.profiles]),
               delimiter=",", fmt="%.17g")
    paths["profile"].write_text(json.dumps({"method": frames.method, "hyperparams": frames.hyperparams,
                                            "profile": functional_variance_profile(frames).tolist()}, indent=2))
    return paths


def read_frames(directory, prefix: str) -> TangentFrameSet:
    directory = Path(directory)
    meta = json.loads((directory / f"{prefix}_profile.json").read_text())
    dims = np.loadtxt(directory / f"{prefix}_dims.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1].astype(int)
    raw = np.loadtxt(directory / f"{prefix}_bases.csv", delimiter=",", ndmin=2)
    n = raw.shape[0]
    p = int(round((-1 + np.sqrt(1 + 4 * raw.shape[1])) / 2))
    bases = raw[:, : p * p].reshape(n, p, p)
    return TangentFrameSet(bases, dims, raw[:, p * p:], meta["method"], meta.get("hyperparams", {}))
