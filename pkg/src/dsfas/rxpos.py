"""Receive antenna positions: per-UE SINR gradient ascent and a feasibility baseline.

With the transmit side fixed, the channel of UE k is ``h^H = b(v)^H G`` where
``b(v)`` stacks the receive field vectors over transmitters and ``G`` holds
``diag(upsilon) A(U_t)`` on its block diagonal.  The SINR then reads

    SINR(v) = b^H Rbar_k b / (b^H (Rbar - Rbar_k) b + sigma^2)

with ``Rbar_k = G R_k G^H``.  Each UE only touches its own position, so the
per-UE problems are independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .physics import NumericsWarning, SystemState, directions, field_matrix

__all__ = [
    "GAConfig",
    "RxProblem",
    "GAResult",
    "rx_problem",
    "sinr_of_v",
    "ga_optimize",
    "feasibility_baseline",
    "optimize_all",
    "SINR_RTOL",
]

TWO_PI = 2.0 * np.pi
SINR_RTOL = 1e-6  # relative slack when declaring SINR >= gamma


@dataclass(frozen=True)
class GAConfig:
    """Step schedule theta = a / (iteration + b); ``a=None`` picks 1 / (1 + |grad at v0|)."""

    a: float | None = None
    b: float = 10.0
    max_iter: int = 30
    track_best: bool = True
    step_tol: float = 1e-6  # wavelengths

    def __post_init__(self):
        if self.a is not None and self.a <= 0:
            raise ValueError("a must be positive")
        if self.b < 0:
            raise ValueError("b must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class RxProblem:
    """Everything SINR_k(v) needs, precomputed once per AO iteration."""

    dirs: np.ndarray  # (M_t * L, 2) receive path directions
    Rs: np.ndarray  # (M_t L, M_t L) signal matrix Rbar_k
    Ri: np.ndarray  # interference matrix Rbar - Rbar_k
    noise: float
    gamma: float
    lo: np.ndarray
    hi: np.ndarray

    def field(self, v):
        return np.exp(-1j * TWO_PI * (self.dirs @ np.asarray(v, float)))

    def parts(self, v):
        b = self.field(v)
        db = -1j * TWO_PI * b[:, None] * self.dirs  # (M_t L, 2)
        Sb, Ib = self.Rs @ b, self.Ri @ b
        num = float(np.real(b.conj() @ Sb))
        den = float(np.real(b.conj() @ Ib))
        g_num = 2.0 * np.real(db.conj().T @ Sb)
        g_den = 2.0 * np.real(db.conj().T @ Ib)
        return num, den, g_num, g_den

    def zeta(self, v) -> float:
        """Unnormalized QoS gap N - gamma (I + sigma^2)."""
        num, den, _, _ = self.parts(v)
        return num - self.gamma * (den + self.noise)


def rx_problem(state: SystemState, k: int) -> RxProblem:
    ch, lay = state.ch, state.layout
    mt, n, L = ch.m_t, lay.n, ch.l
    G = np.zeros((mt * L, mt * n), dtype=complex)
    for t in range(mt):
        A = field_matrix(lay.tx[t], directions(ch.aod[t, k]))  # (L, N)
        G[t * L:(t + 1) * L, t * n:(t + 1) * n] = ch.upsilon[t, k][:, None] * A
    Rs = G @ state.R_k[k] @ G.conj().T
    Rall = G @ state.R @ G.conj().T
    hx, hy = lay.rx_half
    return RxProblem(
        dirs=directions(ch.aoa[:, k]).reshape(mt * L, 2),
        Rs=0.5 * (Rs + Rs.conj().T),
        Ri=0.5 * ((Rall - Rs) + (Rall - Rs).conj().T),
        noise=float(ch.noise_ue[k]),
        gamma=float(state.gamma[k]),
        lo=np.array([-hx, -hy]),
        hi=np.array([hx, hy]),
    )


def sinr_of_v(prob: RxProblem, v) -> tuple[float, np.ndarray]:
    """SINR at receive position ``v`` and its gradient (quotient rule)."""
    num, den, g_num, g_den = prob.parts(v)
    if den < 0:
        if den < -1e-9 * max(abs(num), 1e-300):
            warnings.warn("negative interference clamped to zero", NumericsWarning, stacklevel=2)
        den, g_den = 0.0, np.zeros(2)
    d = den + prob.noise
    return max(num, 0.0) / d, (g_num * d - num * g_den) / d**2


@dataclass
class GAResult:
    v: np.ndarray
    sinr: float
    sinr0: float
    iterations: int
    feasible: bool
    history: list = field(default_factory=list)  # SINR per visited iterate


def _ascend(prob: RxProblem, v0, cfg: GAConfig, *, guard: bool, stop_at_gamma: bool) -> GAResult:
    v0 = np.clip(np.asarray(v0, float), prob.lo, prob.hi)
    s0, g0 = sinr_of_v(prob, v0)
    zeta_floor = min(prob.zeta(v0), 0.0)
    a = cfg.a if cfg.a is not None else 1.0 / (1.0 + np.linalg.norm(g0))
    best_v, best_s = v0.copy(), s0
    v, s, g = v0.copy(), s0, g0
    hist = [s0]
    it = 0
    target = prob.gamma * (1.0 - SINR_RTOL)
    if stop_at_gamma and s0 >= target:
        return GAResult(v0, s0, s0, 0, True, hist)
    for it in range(1, cfg.max_iter + 1):
        theta = a / (it - 1 + cfg.b) if (it - 1 + cfg.b) > 0 else a
        v_new = np.clip(v + theta * g, prob.lo, prob.hi)
        moved = np.linalg.norm(v_new - v)
        v = v_new
        s, g = sinr_of_v(prob, v)
        hist.append(s)
        admissible = not guard or prob.zeta(v) >= zeta_floor
        if stop_at_gamma and s >= target:
            return GAResult(v.copy(), s, s0, it, True, hist)
        if admissible and (s > best_s or not cfg.track_best):
            best_v, best_s = v.copy(), s
        if moved < cfg.step_tol:
            break
    return GAResult(best_v, best_s, s0, it, best_s >= target, hist)


def ga_optimize(prob: RxProblem, v0, cfg: GAConfig = GAConfig(), *, guard: bool = False) -> GAResult:
    """Projected gradient ascent on SINR_k; returns the best admissible iterate.

    With ``guard`` an iterate only counts if it does not push the QoS gap
    below ``min(zeta(v0), 0)``, which keeps the penalty term from growing.
    """
    return _ascend(prob, v0, cfg, guard=guard, stop_at_gamma=False)


def feasibility_baseline(prob: RxProblem, v0, cfg: GAConfig = GAConfig()) -> GAResult:
    """Same iteration, stopping at the first iterate with SINR >= gamma.

    If no iterate gets there the result has ``feasible=False`` and carries
    the best iterate seen.
    """
    return _ascend(prob, v0, cfg, guard=False, stop_at_gamma=True)


def optimize_all(state: SystemState, cfg: GAConfig = GAConfig(), *, feasibility: bool = False,
                 guard: bool = True) -> list:
    """Update every UE position in place; returns the per-UE results."""
    out = []
    for k in range(state.ch.k):
        prob = rx_problem(state, k)
        v0 = state.layout.rx[k]
        res = feasibility_baseline(prob, v0, cfg) if feasibility else ga_optimize(prob, v0, cfg, guard=guard)
        state.layout.rx[k] = res.v
        out.append(res)
    return out
