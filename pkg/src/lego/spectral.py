"""Low-frequency eigenpairs of the random-walk Laplacian."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import ConvergenceError, InvalidArgumentError
from .graph import LaplacianOperator

DENSE_LIMIT = 4000


@dataclass(frozen=True)
class SpectralBasis:
    """``eigenvalues`` ascending, ``eigenvectors`` (n, m0) right eigenvectors of L,
    ``orthobasis`` (n, m0) orthonormal basis of their span."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    orthobasis: np.ndarray

    @property
    def m0(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @classmethod
    def from_vectors(cls, vectors, eigenvalues=None) -> "SpectralBasis":
        """Wrap arbitrary column vectors (orthonormal basis by thin QR)."""
        Phi = np.asarray(vectors, dtype=float)
        lam = np.full(Phi.shape[1], np.nan) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
        return cls(lam, Phi, orthonormal_basis(Phi))


def orthonormal_basis(Phi: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(Phi, mode="reduced")
    return Q


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so that the entry of largest magnitude (first on ties) is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def smallest_eigenpairs(lap: LaplacianOperator, m0: int, method: str = "auto") -> SpectralBasis:
    """The ``m0`` smallest eigenpairs of ``L = I - Dn^-1 K``.

    The symmetric conjugate ``I - Dn^-1/2 K Dn^-1/2`` is diagonalized and its
    eigenvectors ``v`` mapped back via ``phi = Dn^-1/2 v``, normalized to
    unit length.  ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"``
    (dense up to ``DENSE_LIMIT`` points).
    """
    n = lap.n
    if not 1 <= m0 <= n:
        raise InvalidArgumentError(f"m0 must be in [1, n={n}], got {m0}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT or m0 >= n - 1 else "lanczos"
    S = lap.symmetric_kernel()
    if method == "dense":
        Ls = np.eye(n) - (S.toarray() if sparse.issparse(S) else S)
        lam, V = scipy.linalg.eigh(Ls, subset_by_index=[0, m0 - 1], driver="evr")
    elif method == "lanczos":
        Ls = (sparse.identity(n, format="csc") - sparse.csc_matrix(S)).tocsc()
        try:
            # shift-invert just below the spectrum so the smallest eigenvalues dominate
            lam, V = eigsh(Ls, k=m0, sigma=-1e-3, which="LM", tol=0, maxiter=10 * n,
                           v0=np.full(n, 1.0 / np.sqrt(n)))
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
    else:
        raise InvalidArgumentError(f"unknown eigensolver {method!r}")
    Phi = V / np.sqrt(lap.normalized_degrees)[:, None]
    Phi /= np.linalg.norm(Phi, axis=0, keepdims=True)
    Phi = fix_signs(Phi)
    return SpectralBasis(lam, Phi, orthonormal_basis(Phi))


def write_spectrum(basis: SpectralBasis, directory, prefix: str = "spectrum") -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"eigenvalues": directory / f"{prefix}_eigenvalues.csv",
             "eigenvectors": directory / f"{prefix}_eigenvectors.csv"}
    np.savetxt(paths["eigenvalues"], np.column_stack([np.arange(basis.m0), basis.eigenvalues]),
               delimiter=",", header="index,eigenvalue", comments="", fmt=["%d", "%.17g"])
    np.savetxt(paths["eigenvectors"], basis.eigenvectors, delimiter=",", fmt="%.17g")
    return paths


def read_spectrum(directory, prefix: str = "spectrum") -> SpectralBasis:
    directory = Path(directory)
    lam = np.loadtxt(directory / f"{prefix}_eigenvalues.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
    Phi = np.loadtxt(directory / f"{prefix}_eigenvectors.csv", delimiter=",", ndmin=2)
    return SpectralBasis(lam, Phi, orthonormal_basis(Phi))
