"""Subspace discrepancy, horizontal/vertical gradient energy and the
rectangle-tube analytic modes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .gradients import GradientField
from .tangent import TangentFrameSet


@dataclass(frozen=True)
class DiscrepancyReport:
    per_point: np.ndarray
    method: str = ""
    hyperparams: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_point))

    @property
    def median(self) -> float:
        return float(np.median(self.per_point))

    @property
    def p90(self) -> float:
        return float(np.percentile(self.per_point, 90))

    def summary(self) -> dict:
        return {"method": self.method, "mean": self.mean, "median": self.median, "p90": self.p90,
                "n": int(self.per_point.size), "hyperparams": self.hyperparams}

    def write(self, directory, prefix: str) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"summary": directory / f"{prefix}_report.json", "per_point": directory / f"{prefix}_discrepancy.csv"}
        paths["summary"].write_text(json.dumps(self.summary(), indent=2))
        np.savetxt(paths["per_point"], np.column_stack([np.arange(self.per_point.size), self.per_point]),
                   delimiter=",", header="index,discrepancy", comments="", fmt=["%d", "%.17g"])
        return paths


@dataclass(frozen=True)
class EnergySplit:
    horizontal: np.ndarray
    vertical: np.ndarray
    indices: np.ndarray


def _check_orthonormal(Q, name):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    if np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1])), initial=0.0) > 1e-6:
        raise InvalidArgumentError(f"{name} does not have orthonormal columns")
    return Q


def principal_angles(Q1, Q2) -> np.ndarray:
    """Principal angles (ascending) between ``span(Q1)`` and ``span(Q2)``."""
    Q1 = _check_orthonormal(Q1, "Q1")
    Q2 = _check_orthonormal(Q2, "Q2")
    cos = np.clip(np.linalg.svd(Q1.T @ Q2, compute_uv=False), 0.0, 1.0)
    return np.sort(np.arccos(cos))


def _batched_cosines(Q1, Q2):
    return np.clip(np.linalg.svd(np.swapaxes(Q1, 1, 2) @ Q2, compute_uv=False), 0.0, 1.0)


def discrepancy(est: TangentFrameSet | np.ndarray, truth: np.ndarray) -> DiscrepancyReport:
    """``D_j = sum_i (1 - cos theta_ji)`` per point.

    ``truth`` is the (n, p, d) stack of ground-truth tangent bases.  When an
    estimate has fewer than ``d`` dimensions each missing one adds 1.
    """
    truth = np.asarray(truth, dtype=float)
    if isinstance(est, TangentFrameSet):
        n_est, method, hp = est.n, est.method, est.hyperparams
    else:
        est = np.asarray(est, dtype=float)
        n_est, method, hp = est.shape[0], "", {}
    if n_est != truth.shape[0]:
        raise InvalidArgumentError(f"length mismatch: {n_est} estimates vs {truth.shape[0]} truths")
    d_true = truth.shape[2]
    D = np.empty(n_est)
    if isinstance(est, TangentFrameSet):
        for d in np.unique(est.dims):
            sel = est.dims == d
            cos = _batched_cosines(est.bases[sel, :, :d], truth[sel])
            D[sel] = np.sum(1.0 - cos, axis=1) + max(d_true - int(d), 0)
    else:
        cos = _batched_cosines(est, truth)
        D = np.sum(1.0 - cos, axis=1) + max(d_true - est.shape[2], 0)
    return DiscrepancyReport(D, method, hp)


def vertical_energy_split(field: GradientField | np.ndarray, normal_frames: np.ndarray, indices=None) -> EnergySplit:
    """Share of squared gradient mass lying in the normal directions, per eigenvector.

    ``field`` is a GradientField or an (n, p, m) array of gradients;
    ``normal_frames`` the (n, p, k) ground-truth normal bases.
    """
    G = field.gradients if isinstance(field, GradientField) else np.asarray(field, dtype=float)
    if normal_frames is None:
        raise InvalidArgumentError("vertical energy needs ground-truth normal frames")
    N = np.asarray(normal_frames, dtype=float)
    if G.ndim == 2:
        G = G[:, :, None]
    total = np.einsum("npm,npm->m", G, G)
    if np.any(total == 0):
        raise InvalidArgumentError("zero gradient field")
    vert = np.einsum("npk,npm->nkm", N, G)
    v = np.einsum("nkm,nkm->m", vert, vert) / total
    v = np.clip(v, 0.0, 1.0)
    idx = np.arange(G.shape[2]) if indices is None else np.asarray(indices)
    return EnergySplit(1.0 - v, v, idx)


def lattice_gradients(values: np.ndarray, grid_x: int, grid_y: int, length: float, halfwidth: float) -> np.ndarray:
    """Finite-difference gradients of functions sampled on the strip lattice.

    ``values`` is (grid_x * grid_y, m) in the strip's point order; returns (n, 2, m).
    """
    F = np.asarray(values, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    m = F.shape[1]
    grid = F.reshape(grid_y, grid_x, m)
    hx = length / (grid_x - 1)
    hy = 2 * halfwidth / (grid_y - 1)
    gy, gx = np.gradient(grid, hy, hx, axis=(0, 1))
    return np.stack([gx.reshape(-1, m), gy.reshape(-1, m)], axis=1)


@dataclass(frozen=True)
class RectangleMode:
    eigenvalue: float
    values: np.ndarray
    horizontal_energy: float
    vertical_energy: float


def rectangle_mode_oracle(length: float, halfwidth: float, i: int, j: int, points=None) -> RectangleMode:
    """Neumann eigenmode ``(i, j)`` of ``[0, length] x [-halfwidth, halfwidth]``.

    The mode is ``cos(i pi x / l) cos(j pi (y + h) / 2h)``, which equals
    ``-/+ sin(j pi y / 2h)`` for odd ``j``.  Energies are normalized by the
    first nonzero eigenvalue along each factor, giving ``(i^2, j^2)``.
    """
    if length <= 0 or halfwidth <= 0:
        raise InvalidArgumentError("length and halfwidth must be positive")
    lam = (i * np.pi / length) ** 2 + (j * np.pi / (2 * halfwidth)) ** 2
    vals = np.empty(0)
    if points is not None:
        P = np.asarray(points, dtype=float)
        vals = np.cos(i * np.pi * P[:, 0] / length) * np.cos(j * np.pi * (P[:, 1] + halfwidth) / (2 * halfwidth))
    return RectangleMode(float(lam), vals, float(i * i), float(j * j))
