"""Centering, Gram-duality eigendecomposition, and PCA reduction/whitening.

For an n x m centered matrix X (rows = observations) the covariance
X'X/n is m x m.  When m >> n (whole-volume temporal analysis) that matrix
cannot be formed, but its nonzero eigenpairs follow from the small n x n
Gram matrix XX': if XX' g = d^2 g then f = X'g/d satisfies X'X f = d^2 f,
and the covariance eigenvalue is d^2/n.  Nothing of size m x m is ever
allocated on that path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NoComponent, NumericalFailure, RankDeficient

#: relative threshold below which squared singular values count as zero
EPS_RANK = 1e-12

#: refuse Gram matrices beyond this many observations
GRAM_CAP = 4096


@dataclass
class CenteredMatrix:
    """Column-centered (optionally standardized) data, rows = observations."""

    values: np.ndarray            # n x m, column means removed
    column_means: np.ndarray
    column_scales: np.ndarray     # all ones unless standardized
    orientation: str = "spatial"  # spatial | temporal
    zero_variance: np.ndarray | None = None  # bool flag per column

    @property
    def n_observations(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


@dataclass
class DualEigens:
    """Leading eigenpairs of X'X/n obtained through the small Gram matrix."""

    eigenvalues: np.ndarray      # d^2/n, descending
    small_vectors: np.ndarray    # g_k as columns, n x r
    lifted_vectors: np.ndarray   # f_k as columns, m x r, unit norm
    n_dropped: int = 0


@dataclass
class ReducedBasis:
    """m leading covariance eigenvectors (columns) and eigenvalues."""

    vectors: np.ndarray   # variables x m
    values: np.ndarray    # m, strictly positive, descending


@dataclass
class WhitenedData:
    """Z = Lambda^{-1/2} E' X', m x n, with ZZ'/n = identity."""

    Z: np.ndarray

    @property
    def n_components(self) -> int:
        return self.Z.shape[0]

    @property
    def n_observations(self) -> int:
        return self.Z.shape[1]


def center_columns(matrix, standardize: bool = False,
                   orientation: str = "spatial") -> CenteredMatrix:
    """Remove column means; optionally scale columns to unit sample variance.

    Variance uses the 1/n convention so that diag(X'X/n) = 1 after
    standardizing.  Zero-variance columns are flagged, zeroed and given
    scale 1 rather than producing NaNs.
    """
    values = np.array(matrix, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2D matrix, got {values.ndim}D")
    n = values.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    if not np.all(np.isfinite(values)):
        raise ValueError("matrix contains non-finite entries")

    means = values.mean(axis=0)
    values -= means
    variances = np.mean(values * values, axis=0)
    zero_var = variances <= 0.0
    if np.all(zero_var):
        raise DegenerateInput("every column has zero variance")

    scales = np.ones_like(variances)
    if standardize:
        scales = np.sqrt(variances)
        scales[zero_var] = 1.0
        values /= scales
    values[:, zero_var] = 0.0

    return CenteredMatrix(values, means, scales, orientation, zero_var)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Sign per column making its largest-magnitude coordinate positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def gram_eigens(cm: CenteredMatrix, cap: int = GRAM_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of the small Gram matrix XX'.

    Returns (d2, G): squared singular values descending and eigenvectors
    as matching columns, sign-canonicalized.  Small negative eigenvalues
    from roundoff are clamped to zero.
    """
    n = cm.n_observations
    if n > cap:
        raise ValueError(f"{n} observations exceed the Gram cap {cap}")
    gram = cm.values @ cm.values.T
    try:
        d2, G = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"Gram eigendecomposition failed: {exc}") from exc

    trace = float(np.trace(gram))
    floor = -1e-10 * max(trace, 1.0)
    if np.any(d2 < floor):
        raise NumericalFailure(
            f"Gram matrix produced eigenvalue {d2.min():.3e} below {floor:.3e}")
    d2 = np.where(d2 < 0.0, 0.0, d2)

    order = np.argsort(d2)[::-1]
    d2 = d2[order]
    G = G[:, order]
    G = G * _canonical_signs(G)
    return d2, G


def lift_eigenvectors(cm: CenteredMatrix, d2: np.ndarray, G: np.ndarray,
                      eps_rank: float = EPS_RANK,
                      max_vectors: int | None = None) -> DualEigens:
    """Map Gram eigenvectors to covariance eigenvectors f = X'g/d.

    Eigenvalues below eps_rank relative to the largest are dropped.  Peak
    auxiliary storage is O(n*m + n^2); no m x m array is formed.
    """
    if d2.size == 0 or d2[0] <= 0.0:
        raise RankDeficient("no eigenvalue above zero")
    keep = d2 > eps_rank * d2[0]
    n_dropped = int(np.sum(~keep))
    d2_kept = d2[keep]
    G_kept = G[:, keep].copy()
    if max_vectors is not None and d2_kept.size > max_vectors:
        n_dropped += d2_kept.size - max_vectors
        d2_kept = d2_kept[:max_vectors]
        G_kept = G_kept[:, :max_vectors]

    d = np.sqrt(d2_kept)
    F = (cm.values.T @ G_kept) / d
    # keep f = X'g/d exact under canonicalization by flipping pairs together
    signs = _canonical_signs(F)
    F *= signs
    G_kept *= signs

    n = cm.n_observations
    return DualEigens(d2_kept / n, G_kept, F, n_dropped)


def select_component_count(eigenvalues, mode) -> int:
    """Number of components to retain.

    mode 'auto' applies the keep-greater-than-one rule, which presumes
    eigenvalues of a correlation matrix (standardized columns upstream);
    an integer requests that many, capped at the nonzero count.
    """
    ev = np.asarray(eigenvalues, dtype=np.float64)
    if ev.size == 0:
        raise ValueError("empty eigenvalue list")
    if mode == "auto":
        m = int(np.sum(ev > 1.0))
        if m == 0:
            raise NoComponent("no correlation eigenvalue exceeds 1")
        return m
    m = int(mode)
    if m < 1:
        raise ValueError(f"fixed component count must be >= 1, got {m}")
    nonzero = int(np.sum(ev > EPS_RANK * max(ev[0], 0.0))) if ev[0] > 0 else 0
    if nonzero == 0:
        raise RankDeficient("no nonzero eigenvalue")
    return min(m, nonzero)


def covariance_spectrum(cm: CenteredMatrix) -> np.ndarray:
    """Descending eigenvalues of X'X/n, via whichever side is small."""
    n, m = cm.values.shape
    if m > n:
        d2, _ = gram_eigens(cm)
        return d2 / n
    cov = (cm.values.T @ cm.values) / n
    try:
        vals = np.linalg.eigvalsh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"covariance eigendecomposition failed: {exc}") from exc
    vals = np.where(vals < 0.0, 0.0, vals)
    return vals[::-1]


def reduce_and_whiten(cm: CenteredMatrix, m: int) -> tuple[WhitenedData, ReducedBasis]:
    """PCA-reduce to m components and whiten: Z = Lambda^{-1/2} E' X'.

    Uses the Gram-duality path when variables outnumber observations
    (temporal case), a direct small eigendecomposition otherwise.
    """
    n, p = cm.values.shape
    if m < 1:
        raise ValueError(f"component count must be >= 1, got {m}")

    if p > n:
        d2, G = gram_eigens(cm)
        nonzero = int(np.sum(d2 > EPS_RANK * d2[0])) if d2[0] > 0 else 0
        if m > nonzero:
            raise RankDeficient(f"requested {m} components, rank is {nonzero}")
        duals = lift_eigenvectors(cm, d2, G, max_vectors=m)
        E_red = duals.lifted_vectors
        lam = duals.eigenvalues
    else:
        cov = (cm.values.T @ cm.values) / n
        try:
            vals, vecs = np.linalg.eigh(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"covariance eigendecomposition failed: {exc}") from exc
        vals = np.where(vals < 0.0, 0.0, vals)[::-1]
        vecs = vecs[:, ::-1]
        nonzero = int(np.sum(vals > EPS_RANK * vals[0])) if vals[0] > 0 else 0
        if m > nonzero:
            raise RankDeficient(f"requested {m} components, rank is {nonzero}")
        vecs = vecs * _canonical_signs(vecs)
        E_red = vecs[:, :m]
        lam = vals[:m]

    Z = (cm.values @ E_red).T / np.sqrt(lam)[:, None]
    return WhitenedData(Z), ReducedBasis(E_red, lam)
