"""Kurtosis-based fixed-point FastICA on whitened data.

The contrast is the fourth cumulant: each unmixing row follows the
update w <- E[z (w'z)^3] - 3w, renormalized, until the direction stops
moving.  Deflation orthogonalizes against already-found rows; the
symmetric scheme re-orthogonalizes the whole matrix every sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import ReducedBasis, WhitenedData
from .errors import NotWhitened

DEFAULT_MAX_ITER = 1000
DEFAULT_TOL = 1e-8


@dataclass
class UnmixingMatrix:
    """Orthonormal unmixing rows in whitened space plus convergence record."""

    W: np.ndarray
    iterations: np.ndarray   # per component
    deltas: np.ndarray       # final 1 - |<w_new, w_old>| per component
    converged: np.ndarray    # bool per component
    seed: int
    scheme: str


@dataclass
class IcaDecomposition:
    """Sources, mixing matrices and provenance of one ICA run."""

    S: np.ndarray                 # n x m, unit-variance source columns
    A: np.ndarray                 # m x m whitened-space mixing (W' with scales folded in)
    mixing: np.ndarray            # data-space mixing a^X, (variables) x m
    basis: ReducedBasis
    orientation: str              # spatial | temporal
    seed: int
    unmixing: UnmixingMatrix
    spectrum: np.ndarray          # leading covariance eigenvalues of the run
    voxel_map: object = None      # VoxelIndexMap when produced by the pipeline

    @property
    def n_components(self) -> int:
        return self.S.shape[1]


def _sym_orthogonalize(W: np.ndarray) -> np.ndarray:
    """W <- (W W')^{-1/2} W."""
    vals, vecs = np.linalg.eigh(W @ W.T)
    vals = np.maximum(vals, 1e-300)
    return (vecs / np.sqrt(vals)) @ vecs.T @ W


def _check_whitened(Z: np.ndarray, tol: float = 1e-4):
    n = Z.shape[1]
    C = Z @ Z.T / n
    err = np.max(np.abs(C - np.eye(Z.shape[0])))
    if err > tol:
        raise NotWhitened(f"sample covariance deviates from identity by {err:.2e}")


def fastica_kurtosis(Z, m: int | None = None, seed: int = 0,
                     max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                     scheme: str = "deflation") -> UnmixingMatrix:
    """Estimate an m x m unmixing matrix for whitened data Z (m x n).

    Components that still move after max_iter sweeps are returned flagged,
    not raised: noisy data routinely has a few.  Rows come back ordered by
    descending kurtosis magnitude of the corresponding source.
    """
    if isinstance(Z, WhitenedData):
        Z = Z.Z
    Z = np.asarray(Z, dtype=np.float64)
    if scheme not in ("deflation", "symmetric"):
        raise ValueError(f"scheme must be 'deflation' or 'symmetric', got {scheme!r}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if m is None:
        m = Z.shape[0]
    if m > Z.shape[0]:
        raise ValueError(f"cannot extract {m} components from {Z.shape[0]} whitened rows")
    Z = Z[:m]
    _check_whitened(Z)
    n = Z.shape[1]

    rng = np.random.Generator(np.random.Philox(key=seed))
    W0 = _sym_orthogonalize(rng.standard_normal((m, m)))

    iterations = np.zeros(m, dtype=np.int64)
    deltas = np.full(m, np.inf)
    converged = np.zeros(m, dtype=bool)

    if scheme == "deflation":
        W = np.zeros((m, m))
        for c in range(m):
            w = W0[c].copy()
            if c:
                w -= W[:c].T @ (W[:c] @ w)
            w /= np.linalg.norm(w)
            for it in range(1, max_iter + 1):
                wz = w @ Z
                w_new = (Z @ (wz ** 3)) / n - 3.0 * w
                if c:
                    w_new -= W[:c].T @ (W[:c] @ w_new)
                norm = np.linalg.norm(w_new)
                if norm < 1e-12:
                    # degenerate direction (kurtosis ~ 0); restart from noise
                    w_new = rng.standard_normal(m)
                    if c:
                        w_new -= W[:c].T @ (W[:c] @ w_new)
                    norm = np.linalg.norm(w_new)
                w_new /= norm
                delta = 1.0 - abs(float(w_new @ w))
                w = w_new
                iterations[c], deltas[c] = it, delta
                if delta <= tol:
                    converged[c] = True
                    break
            W[c] = w
    else:
        W = W0
        for it in range(1, max_iter + 1):
            WZ = W @ Z
            W_new = _sym_orthogonalize((WZ ** 3) @ Z.T / n - 3.0 * W)
            deltas = 1.0 - np.abs(np.sum(W_new * W, axis=1))
            W = W_new
            iterations[:] = it
            if np.max(deltas) <= tol:
                break
        converged = deltas <= tol

    # report components with the most non-Gaussian sources first
    S = W @ Z
    kurt = np.mean(S ** 4, axis=1) - 3.0
    order = np.argsort(-np.abs(kurt), kind="stable")
    return UnmixingMatrix(W[order], iterations[order], deltas[order],
                          converged[order], seed, scheme)


def extract_sources(Z, W: np.ndarray | UnmixingMatrix) -> np.ndarray:
    """Sources S = (WZ)', columns rescaled to exactly unit sample variance."""
    if isinstance(Z, WhitenedData):
        Z = Z.Z
    if isinstance(W, UnmixingMatrix):
        W = W.W
    S = (W @ Z).T
    sd = S.std(axis=0)
    sd[sd == 0.0] = 1.0
    return S / sd


def source_scales(Z, W: np.ndarray) -> np.ndarray:
    """Standard deviations folded out of the sources (and into the mixing)."""
    if isinstance(Z, WhitenedData):
        Z = Z.Z
    sd = (W @ Z).std(axis=1)
    sd[sd == 0.0] = 1.0
    return sd


def mixing_in_data_space(basis: ReducedBasis, A: np.ndarray) -> np.ndarray:
    """a^X = E_red Lambda_red^{1/2} A, the mixing acting on original variables."""
    return basis.vectors @ (np.sqrt(basis.values)[:, None] * A)


def reconstruct(mixing: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Sum of outer products a^X_j (x) s_j, i.e. the rank-m part of X'."""
    return mixing @ S.T
