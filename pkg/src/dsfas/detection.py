"""Chi-squared laws, the GLR detector and its false-alarm calibration.

Two conventions for the GLR statistic ``ln L = ||P_G y||^2 / sigma^2`` are
supported:

* ``"paper"``: ``ln L ~ chi2(2q)`` under H0 and ``chi2'(2q, omega)`` under H1.
* ``"half"``: ``ln L ~ chi2(2q) / 2`` and ``chi2'(2q, 2 omega) / 2``, which is
  what circular complex Gaussian noise actually produces.

In both cases the threshold is the ``1 - P_FA`` quantile of ``chi2(2q)``; the
half convention compares ``2 ln L`` against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq
from scipy.special import gammainc, gammaln

__all__ = [
    "DetectorConfig",
    "CalibrationReport",
    "SeriesOverflowError",
    "RankDeficiencyError",
    "CalibrationError",
    "chi2_cdf",
    "chi2_quantile",
    "nc_chi2_cdf",
    "glr_threshold",
    "detection_probability",
    "effective_noncentrality",
    "glr_matrix",
    "glr_statistic",
    "mle_alpha",
    "simulate_h0",
    "calibrate_convention",
    "binomial_band",
]

CONVENTIONS = ("paper", "half")
NC_LIMIT = 1e6
TAIL_TOL = 1e-12


class SeriesOverflowError(OverflowError):
    pass


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    q: int
    p_fa: float = 0.05
    noise: float = 1.0
    convention: str = "half"

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if not 0.0 < self.p_fa <= 1.0:
            raise ValueError("p_fa must lie in (0, 1]")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")

    @property
    def dof(self) -> int:
        return 2 * self.q


def chi2_cdf(x, dof):
    x = np.asarray(x, dtype=float)
    return gammainc(dof / 2.0, np.maximum(x, 0.0) / 2.0)


def chi2_quantile(p: float, dof: float) -> float:
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    if p == 0.0:
        return 0.0
    hi = max(1.0, 2.0 * dof)
    while chi2_cdf(hi, dof) < p:
        hi *= 2.0
    return float(brentq(lambda x: chi2_cdf(x, dof) - p, 0.0, hi, xtol=1e-12, rtol=1e-14))


def nc_chi2_cdf(x: float, dof: float, noncentrality: float) -> float:
    """Poisson mixture of central CDFs, summed outward from the modal term."""
    lam = float(noncentrality)
    if lam < 0:
        raise ValueError("noncentrality must be nonnegative")
    if lam > NC_LIMIT:
        raise SeriesOverflowError(f"noncentrality {lam:g} exceeds {NC_LIMIT:g}")
    if x <= 0:
        return 0.0
    if lam == 0:
        return float(chi2_cdf(x, dof))
    half = lam / 2.0
    j0 = int(np.floor(half))

    def weight(j):
        return np.exp(-half + j * np.log(half) - gammaln(j + 1))

    total = 0.0
    used = 0.0
    j = j0
    while j >= 0:
        w = weight(j)
        total += w * chi2_cdf(x, dof + 2 * j)
        used += w
        if w < TAIL_TOL * 1e-3 and j < j0:
            break
        j -= 1
    j = j0 + 1
    while 1.0 - used > TAIL_TOL:
        w = weight(j)
        total += w * chi2_cdf(x, dof + 2 * j)
        used += w
        j += 1
        if w < 1e-300 and j > j0 + 10 * (np.sqrt(half) + 10):
            break
    return float(min(max(total, 0.0), 1.0))


def glr_threshold(cfg: DetectorConfig) -> float:
    """ln(gamma_0) for the configured false-alarm rate."""
    if cfg.p_fa >= 1.0:
        return 0.0
    return chi2_quantile(1.0 - cfg.p_fa, cfg.dof)


def effective_noncentrality(omega: float, convention: str) -> float:
    return 2.0 * omega if convention == "half" else float(omega)


def detection_probability(omega: float, cfg: DetectorConfig) -> float:
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    if omega == 0:
        # the threshold is the (1 - P_FA) quantile, so this is P_FA by
        # construction; returning it avoids the round trip through the cdf
        return float(cfg.p_fa)
    thr = glr_threshold(cfg)
    return 1.0 - nc_chi2_cdf(thr, cfg.dof, effective_noncentrality(omega, cfg.convention))


def decision_statistic(stat, convention: str):
    """Value compared against the chi2(2q) threshold."""
    return 2.0 * np.asarray(stat) if convention == "half" else np.asarray(stat)


# --------------------------------------------------------------------------
# GLR statistic


def glr_matrix(G_rx: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Stack G~[tau] = blkdiag_r(G_r X[tau]) over snapshots.

    ``G_rx`` has shape (M_r, M_t, N, N) holding G_{t,r}; ``X`` has shape
    (T, M_t, N) holding the per-transmitter signals x_t[tau].
    """
    mr, mt, n, _ = G_rx.shape
    T = X.shape[0]
    out = np.zeros((T, mr * n, mr * mt), dtype=complex)
    for r in range(mr):
        # column t of G_r X[tau] is G_{t,r} x_t[tau]
        cols = np.einsum("tij,stj->sit", G_rx[r], X)
        out[:, r * n:(r + 1) * n, r * mt:(r + 1) * mt] = cols
    return out.reshape(T * mr * n, mr * mt)


def _qr(G, tol=1e-10):
    Q, Rm, piv = sla.qr(G, mode="economic", pivoting=True)
    d = np.abs(np.diag(Rm))
    rank = int(np.sum(d > tol * d[0])) if d.size and d[0] > 0 else 0
    if rank < G.shape[1]:
        bad = sorted(int(c) for c in piv[rank:])
        raise RankDeficiencyError(f"G has rank {rank} < {G.shape[1]}; deficient columns {bad}")
    return Q, Rm, piv


def glr_statistic(y: np.ndarray, G: np.ndarray, noise: float) -> float:
    Q, _, _ = _qr(G)
    z = Q.conj().T @ y
    return float(np.real(z.conj() @ z) / noise)


def mle_alpha(y: np.ndarray, G: np.ndarray) -> np.ndarray:
    Q, Rm, piv = _qr(G)
    sol = sla.solve_triangular(Rm, Q.conj().T @ y)
    out = np.empty_like(sol)
    out[piv] = sol
    return out


def simulate_h0(q: int, draws: int, rng: np.random.Generator, rows: int | None = None,
                noise: float = 1.0, batch: int = 20000, G: np.ndarray | None = None) -> np.ndarray:
    """GLR statistics of pure circular complex Gaussian noise.

    ``G`` is the regression matrix (rows x q); when omitted a random
    full-rank one with ``rows`` >= q rows is drawn, since the statistic's law
    under H0 does not depend on it.
    """
    if G is None:
        rows = rows or 4 * q
        G = rng.standard_normal((rows, q)) + 1j * rng.standard_normal((rows, q))
    elif G.shape[1] != q:
        raise ValueError("G must have q columns")
    rows = G.shape[0]
    Q, _, _ = _qr(G)
    out = np.empty(draws)
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        n = np.sqrt(noise / 2) * (rng.standard_normal((m, rows)) + 1j * rng.standard_normal((m, rows)))
        z = n @ Q.conj()
        out[done:done + m] = np.sum(np.abs(z) ** 2, axis=1) / noise
        done += m
    return out


def binomial_band(p: float, n: int, sigmas: float = 3.0):
    s = sigmas * np.sqrt(p * (1 - p) / n)
    return p - s, p + s


@dataclass
class CalibrationReport:
    selected: str
    rates: dict  # convention -> empirical false-alarm rate
    consistent: dict  # convention -> bool
    threshold: float
    draws: int
    p_fa: float

    def lines(self):
        lo, hi = binomial_band(self.p_fa, self.draws)
        out = [
            f"target_p_fa,{self.p_fa}",
            f"draws,{self.draws}",
            f"threshold,{self.threshold:.12g}",
            f"band_low,{lo:.6f}",
            f"band_high,{hi:.6f}",
        ]
        for c in CONVENTIONS:
            out.append(f"rate_{c},{self.rates[c]:.6f}")
            out.append(f"consistent_{c},{int(self.consistent[c])}")
        out.append(f"selected,{self.selected}")
        return out


def calibrate_convention(cfg: DetectorConfig, statistics: np.ndarray) -> CalibrationReport:
    """Pick the convention whose false-alarm rate on H0 draws matches P_FA."""
    statistics = np.asarray(statistics, dtype=float)
    n = statistics.size
    if n < 1:
        raise CalibrationError("no H0 statistics supplied")
    thr = glr_threshold(cfg)
    lo, hi = binomial_band(cfg.p_fa, n)
    rates, ok = {}, {}
    for c in CONVENTIONS:
        rate = float(np.mean(decision_statistic(statistics, c) >= thr))
        rates[c] = rate
        ok[c] = lo <= rate <= hi
    good = [c for c in CONVENTIONS if ok[c]]
    if not good:
        raise CalibrationError(
            "no convention matches the target false-alarm rate: "
            + ", ".join(f"{c}={rates[c]:.5f}" for c in CONVENTIONS)
            + f" (band [{lo:.5f}, {hi:.5f}])"
        )
    selected = min(good, key=lambda c: abs(rates[c] - cfg.p_fa))
    return CalibrationReport(selected, rates, ok, thr, n, cfg.p_fa)
