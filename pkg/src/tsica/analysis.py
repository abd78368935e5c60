"""Post-hoc characterization of extracted components.

Covers dominant-frequency/phase estimation from the DFT, assignment of
components to reference signals by Pearson or binary correlation,
quantile thresholding of maps and time courses, the energy index used to
break assignment conflicts, exact moments of phase-shifted sampled
sinusoids, and a phase-constrained least-squares sinusoid fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .errors import (
    AllZero,
    BothAllZero,
    DegenerateThreshold,
    NoDominantBin,
    SingularNormalEquations,
    ZeroVariance,
)

PI = math.pi


def quantile(values, q: float) -> float:
    """Empirical quantile: order statistics with linear interpolation.

    The convention is numpy's 'linear' method, i.e. the value at fractional
    order-statistic position (len-1)*q.  Fixed here so every threshold in
    the package agrees.
    """
    return float(np.quantile(np.asarray(values, dtype=np.float64).ravel(), q,
                             method="linear"))


def dominant_frequency_phase(samples, dt: float = 1.0) -> tuple[float, float, float]:
    """Dominant non-DC DFT bin of a time course.

    Returns (frequency in Hz, phase in [0, pi), magnitude).  The phase is
    reported modulo pi because extracted components carry a free sign.
    Ties between bins go to the lowest frequency.
    """
    x = np.asarray(samples, dtype=np.float64)
    T = x.size
    if T < 4:
        raise ValueError(f"need at least 4 samples, got {T}")
    x = x - x.mean()
    spectrum = np.fft.rfft(x)
    mags = np.abs(spectrum[1:T // 2 + 1])
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    if mags.size == 0 or np.max(mags) <= 1e-12 * T * scale:
        raise NoDominantBin("no non-DC bin above the noise floor")
    k = int(np.argmax(mags)) + 1  # argmax returns the first (lowest) bin on ties
    freq = k / (T * dt)
    phase = float(np.angle(spectrum[k])) % PI
    return freq, phase, float(mags[k - 1])


def phase_difference_mod_pi(a: float, b: float) -> float:
    """Distance between two phases defined modulo pi, in [0, pi/2]."""
    d = abs(a - b) % PI
    return min(d, PI - d)


@dataclass
class Assignment:
    """Component-to-reference mapping with scores.

    ``pairs`` maps component index -> (reference index, score); after
    disambiguation each reference keeps at most one component and losers
    move to ``unassigned``.
    """

    pairs: dict[int, tuple[int, float]] = field(default_factory=dict)
    unassigned: list[int] = field(default_factory=list)

    def components_for(self, ref: int) -> list[int]:
        return sorted(k for k, (j, _) in self.pairs.items() if j == ref)

    def is_one_to_one(self) -> bool:
        refs = [j for j, _ in self.pairs.values()]
        return len(refs) == len(set(refs))


def pearson_assign(components, references) -> Assignment:
    """Assign each component to the reference with largest |correlation|.

    ``components`` and ``references`` are sequences of equal-length 1D
    signals.  The signed correlation is kept: its sign decides which tail
    gets thresholded downstream.  Several components may map to the same
    reference; resolve with the energy index.
    """
    comps = [np.asarray(c, dtype=np.float64) for c in components]
    refs = [np.asarray(r, dtype=np.float64) for r in references]
    if not refs:
        raise ValueError("need at least one reference")
    T = refs[0].size
    if any(c.size != T for c in comps) or any(r.size != T for r in refs):
        raise ValueError("components and references must share one length")
    for i, sig in enumerate(comps + refs):
        if sig.std() == 0.0:
            raise ZeroVariance(f"signal {i} is constant")

    out = Assignment()
    for i, c in enumerate(comps):
        cc = c - c.mean()
        best_j, best_r = -1, 0.0
        for j, r in enumerate(refs):
            rr = r - r.mean()
            rho = float(cc @ rr / (np.linalg.norm(cc) * np.linalg.norm(rr)))
            if abs(rho) > abs(best_r):
                best_j, best_r = j, rho
        out.pairs[i] = (best_j, best_r)
    return out


def threshold_two_sided(values, q_hi: float = 0.9, q_lo: float = 0.1,
                        sign: int = 1) -> np.ndarray:
    """Keep values above quantile(q_hi) (sign > 0) or below quantile(q_lo).

    Strict inequality, so an all-equal map keeps nothing.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty map")
    if sign >= 0:
        return v > quantile(v, q_hi)
    return v < quantile(v, q_lo)


def threshold_abs(values, q: float = 0.95) -> np.ndarray:
    """Keep values whose magnitude exceeds the q-quantile of magnitudes."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty map")
    return np.abs(v) > quantile(np.abs(v), q)


def select_signed_part(samples) -> tuple[np.ndarray, int]:
    """Keep the positive or negative part, whichever peaks higher.

    Returns (part, polarity).  Ties go to the positive part.  The kept
    samples retain their sign; the rest become zero.
    """
    x = np.asarray(samples, dtype=np.float64)
    if not np.any(x != 0.0):
        raise AllZero("signal is identically zero")
    if x.max() >= -x.min():
        return np.where(x > 0.0, x, 0.0), 1
    return np.where(x < 0.0, x, 0.0), -1


def binarize_timecourse(samples, q: float) -> np.ndarray:
    """Threshold a signed part into a {-1, 0, +1} event sequence.

    Samples whose magnitude exceeds the q-quantile of magnitudes become
    their sign; everything else becomes 0.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    x = np.asarray(samples, dtype=np.float64)
    thr = quantile(np.abs(x), q)
    out = np.zeros(x.size, dtype=np.int64)
    hot = np.abs(x) > thr
    out[hot] = np.sign(x[hot]).astype(np.int64)
    return out


def _check_ternary(x: np.ndarray, name: str):
    if not np.all(np.isin(x, (-1, 0, 1))):
        raise ValueError(f"{name} must take values in {{-1, 0, 1}}")


def binary_correlation(u, v) -> float:
    """Correlation of two ternary event sequences.

    bcor(u, v) = sum_t sign(u_t v_t) / sum_t (sign|u_t| + sign|v_t| -
    sign|u_t v_t|): agreement minus disagreement over the support union.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("sequences must be 1D and of equal length")
    _check_ternary(u, "u")
    _check_ternary(v, "v")
    prod = u * v
    num = int(np.sum(np.sign(prod)))
    den = int(np.sum(np.abs(np.sign(u)) + np.abs(np.sign(v)) - np.abs(np.sign(prod))))
    if den == 0:
        raise BothAllZero("both sequences have empty support")
    return num / den


def binary_assign(components, references, quantiles) -> Assignment:
    """Assign components to event references by largest |binary correlation|.

    Each component time course is reduced to its dominant signed part and,
    for every reference j, binarized at that reference's quantile before
    computing bcor.  ``quantiles`` gives one threshold per reference
    (typically 1 - events/T).
    """
    refs = [np.asarray(np.sign(r)).astype(np.int64) for r in references]
    quantiles = list(quantiles)
    if len(quantiles) != len(refs):
        raise ValueError("need one quantile per reference")
    out = Assignment()
    for i, comp in enumerate(components):
        part, _ = select_signed_part(comp)
        best_j, best_b = -1, 0.0
        for j, (r, q) in enumerate(zip(refs, quantiles)):
            b = binary_correlation(binarize_timecourse(part, q), r)
            if abs(b) > abs(best_b):
                best_j, best_b = j, b
        out.pairs[i] = (best_j, best_b)
    return out


def energy_index(part1, part2, q_src: float = 0.91) -> tuple[float, float, int]:
    """Decide which of two signed parts better explains one source.

    Both parts are normalized by their peak magnitude; the threshold is
    half the q_src-quantile of |C1*| + |C2*|; each energy is the sum of
    that part's magnitudes strictly above the threshold.  Returns
    (e1, e2, winner) with winner in {1, 2}; ties go to 1.
    """
    c1 = np.asarray(part1, dtype=np.float64)
    c2 = np.asarray(part2, dtype=np.float64)
    m1, m2 = np.max(np.abs(c1)), np.max(np.abs(c2))
    if m1 == 0.0 or m2 == 0.0:
        raise AllZero("both parts must be nonzero")
    a1, a2 = np.abs(c1) / m1, np.abs(c2) / m2
    thr = 0.5 * quantile(a1 + a2, q_src)
    if thr == 0.0:
        raise DegenerateThreshold("energy threshold collapsed to zero")
    e1 = float(np.sum(a1[a1 > thr]))
    e2 = float(np.sum(a2[a2 > thr]))
    return e1, e2, 1 if e1 >= e2 else 2


def resolve_conflicts(assignment: Assignment, components, q_src: float = 0.91) -> Assignment:
    """Give each reference at most one component via the energy index.

    When more than one component claims a reference, winners are decided
    by sequential pairwise energy comparison of their dominant signed
    parts; losers land in ``unassigned``.
    """
    parts = {}

    def part_of(i):
        if i not in parts:
            parts[i] = select_signed_part(components[i])[0]
        return parts[i]

    resolved = Assignment(pairs=dict(assignment.pairs),
                          unassigned=list(assignment.unassigned))
    refs = {j for j, _ in resolved.pairs.values()}
    for j in sorted(refs):
        claimants = resolved.components_for(j)
        while len(claimants) > 1:
            a, b = claimants[0], claimants[1]
            _, _, winner = energy_index(part_of(a), part_of(b), q_src)
            loser = b if winner == 1 else a
            resolved.unassigned.append(loser)
            del resolved.pairs[loser]
            claimants = resolved.components_for(j)
    resolved.unassigned.sort()
    return resolved


class SinusoidMoments(NamedTuple):
    ex: float
    ey: float
    exy: float
    cov: float


def _mean_geometric_phase(t: float, a: int, n: int) -> complex:
    """exp(i a t) * (1/n) * sum_{k=0}^{n-1} exp(i k t)."""
    z = np.exp(1j * t)
    if abs(z - 1.0) < 1e-3:
        # geometric ratio loses precision near z = 1; sum the n terms directly
        return np.exp(1j * a * t) * np.mean(np.exp(1j * t * np.arange(n)))
    return np.exp(1j * a * t) * (np.exp(1j * n * t) - 1.0) / (n * (z - 1.0))


def sinusoid_moments(f: float, phi1: float, phi2: float, a: int, b: int) -> SinusoidMoments:
    """Exact moments of X = sin(2 pi f U + phi1), Y = sin(2 pi f U + phi2)
    for U uniform on the integers {a, ..., b}.

    E[X]  = (1/n) sum_k sin(phi1 + 2 pi f (a+k))
    E[XY] = 1/2 [cos(phi1 - phi2) - (1/n) sum_k cos(phi1 + phi2 + 4 pi f (a+k))]
    """
    a, b = int(a), int(b)
    if b < a:
        raise ValueError(f"need b >= a, got a={a}, b={b}")
    n = b - a + 1
    g1 = _mean_geometric_phase(2.0 * PI * f, a, n)
    g2 = _mean_geometric_phase(4.0 * PI * f, a, n)
    ex = float(np.imag(np.exp(1j * phi1) * g1))
    ey = float(np.imag(np.exp(1j * phi2) * g1))
    exy = 0.5 * (math.cos(phi1 - phi2) - float(np.real(np.exp(1j * (phi1 + phi2)) * g2)))
    return SinusoidMoments(ex, ey, exy, exy - ex * ey)


class PhaseFit(NamedTuple):
    coeffs: np.ndarray
    phase: float
    residual: float


def phase_constrained_lsq(signals, freq: float, times=None,
                          n_grid: int = 1024) -> PhaseFit:
    """Fit sin(2 pi f t + phi) by a linear combination of observed signals.

    For fixed phi the coefficients solve the normal equations; phi itself
    is found on an n_grid-point grid over [0, pi) and refined locally.
    Returns the coefficient vector, the phase in [0, pi) and the residual
    sum of squares.
    """
    X = np.asarray(signals, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    T, p = X.shape
    if times is None:
        times = np.arange(T, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if times.size != T:
        raise ValueError("times must match the signal length")
    if T < 2 * p:
        raise ValueError(f"need at least {2 * p} samples for {p} signals, got {T}")

    G = X.T @ X
    if np.linalg.cond(G) > 1e12:
        raise SingularNormalEquations("observed signals are collinear")
    Ginv_Xt = np.linalg.solve(G, X.T)

    theta = 2.0 * PI * freq * times
    B = np.column_stack([np.sin(theta), np.cos(theta)])   # y(phi) = B @ (cos phi, sin phi)
    # residual(phi) = beta' M beta with M = B'B - B'X G^{-1} X'B
    M = B.T @ B - (B.T @ X) @ (Ginv_Xt @ B)

    def residual(phi):
        beta = np.array([math.cos(phi), math.sin(phi)])
        return float(beta @ M @ beta)

    grid = np.linspace(0.0, PI, n_grid, endpoint=False)
    values = [residual(phi) for phi in grid]
    k = int(np.argmin(values))
    step = PI / n_grid
    res = optimize.minimize_scalar(residual, bounds=(grid[k] - step, grid[k] + step),
                                   method="bounded",
                                   options={"xatol": 1e-12})
    phi = float(res.x) % PI
    y = B @ np.array([math.cos(phi), math.sin(phi)])
    coeffs = Ginv_Xt @ y
    return PhaseFit(coeffs, phi, residual(phi))


def write_timecourse_table(path, names, columns):
    """Tabular text: header row of names, one column per signal."""
    cols = [np.asarray(c, dtype=np.float64) for c in columns]
    if len(cols) != len(names):
        raise ValueError("one name per column required")
    T = cols[0].size
    if any(c.size != T for c in cols):
        raise ValueError("columns must share one length")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\t".join(names) + "\n")
        for t in range(T):
            fh.write("\t".join(format(c[t], ".17g") for c in cols) + "\n")


def read_timecourse_table(path) -> tuple[list[str], np.ndarray]:
    """Inverse of write_timecourse_table; returns (names, T x k array)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        names = header.split("\t")
        rows = [[float(tok) for tok in line.split("\t")] for line in fh if line.strip()]
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ValueError(f"{path}: malformed time-course table")
    return names, data
