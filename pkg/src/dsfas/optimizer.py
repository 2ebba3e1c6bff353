"""Alternating optimization of beamforming, transmit positions and receive positions.

Each outer iteration solves the penalized beamforming relaxation, sweeps the
transmit elements once with MM updates, then runs SINR gradient ascent for
every UE antenna.  Baseline schemes switch individual steps off.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import beamforming, rxpos, txpos
from .detection import DetectorConfig, detection_probability
from .physics import (
    AntennaLayout,
    SystemState,
    TransmitCovariances,
    channel_rows,
    sensing_weights,
    sinr,
)
from .scenario import ChannelSet, ScenarioConfig, generate_scenario

__all__ = [
    "SchemeMode",
    "PackingError",
    "RunResult",
    "ConstraintReport",
    "IterationRecord",
    "cp_positions",
    "ula_positions",
    "init_layout",
    "run",
    "verify_constraints",
    "DEFAULT_EPS",
    "DEFAULT_MAX_ITER",
]

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-2
DEFAULT_MAX_ITER = 100
ULA_SPACING = 0.5  # wavelengths


class PackingError(ValueError):
    """The region cannot host N antennas at the minimum separation."""


class SchemeMode(enum.Enum):
    DS_FAS = "ds-fas"
    T_FAS = "t-fas"
    R_FAS = "r-fas"
    FPA_ULA = "fpa-ula"
    FPA_CP = "fpa-cp"

    @property
    def moves_tx(self) -> bool:
        return self in (SchemeMode.DS_FAS, SchemeMode.T_FAS)

    @property
    def moves_rx(self) -> bool:
        return self in (SchemeMode.DS_FAS, SchemeMode.R_FAS)

    @property
    def tx_init(self) -> str:
        return "ula" if self is SchemeMode.FPA_ULA else "cp"

    @classmethod
    def parse(cls, name: str) -> "SchemeMode":
        key = name.strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown scheme {name!r}; choose from {[m.value for m in cls]}")


# --------------------------------------------------------------------------
# initial layouts


def _min_pairwise(P) -> float:
    P = np.asarray(P, float)
    if len(P) < 2:
        return np.inf
    d = np.linalg.norm(P[:, None] - P[None, :], axis=-1)
    return float(d[np.triu_indices(len(P), 1)].min())


def cp_positions(n: int, hx: float, hy: float, *, grid: int = 41, min_sep: float = txpos.MIN_SEPARATION):
    """Greedy max-min placement in [-hx, hx] x [-hy, hy], then local refinement.

    The first point goes to the lower-left corner; each next point is the grid
    candidate farthest from those already placed.  A shrinking coordinate
    search then nudges points while the minimum distance keeps growing.
    """
    if n < 1:
        raise ValueError("need at least one antenna")
    if n == 1:
        return np.zeros((1, 2))
    xs = np.linspace(-hx, hx, grid if hx > 0 else 1)
    ys = np.linspace(-hy, hy, grid if hy > 0 else 1)
    cand = np.array([(x, y) for y in ys for x in xs])
    pts = [cand[0]]
    dmin = np.linalg.norm(cand - cand[0], axis=1)
    for _ in range(n - 1):
        i = int(np.argmax(dmin))
        pts.append(cand[i])
        dmin = np.minimum(dmin, np.linalg.norm(cand - cand[i], axis=1))
    P = np.array(pts)

    lo, hi = np.array([-hx, -hy]), np.array([hx, hy])
    moves = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)], float)
    step = max(hx, hy) / 4
    best = _min_pairwise(P)
    while step > 1e-4:
        improved = False
        for i in range(n):
            for mv in moves:
                trial = P.copy()
                trial[i] = np.clip(P[i] + step * mv, lo, hi)
                d = _min_pairwise(trial)
                if d > best + 1e-12:
                    P, best, improved = trial, d, True
        if not improved:
            step /= 2
    if best < min_sep - 1e-12:
        raise PackingError(f"{n} antennas do not fit in a {2 * hx:g} x {2 * hy:g} region "
                           f"at separation {min_sep:g} (best {best:.4g})")
    return P


def ula_positions(n: int, hx: float, spacing: float = ULA_SPACING):
    x = (np.arange(n) - (n - 1) / 2) * spacing
    if n > 1 and x[-1] > hx + 1e-12:
        raise PackingError(f"a {n}-element array at spacing {spacing:g} exceeds half-width {hx:g}")
    return np.stack([x, np.zeros(n)], axis=1)


def init_layout(mode: SchemeMode, config: ScenarioConfig) -> AntennaLayout:
    hx = hy = config.region_tx_lambda / 2
    rh = config.region_rx_lambda / 2
    if mode.tx_init == "ula":
        base = ula_positions(config.n, hx)
    else:
        base = cp_positions(config.n, hx, hy)
    tx = np.repeat(base[None], config.m_t, axis=0)
    return AntennaLayout(tx=tx, rx=np.zeros((config.k, 2)), tx_half=(hx, hy), rx_half=(rh, rh))


# --------------------------------------------------------------------------
# results


@dataclass
class IterationRecord:
    omega: float
    nu: float
    rho: float
    sinr: np.ndarray


@dataclass
class RunResult:
    mode: SchemeMode
    trace: list  # IterationRecord per AO iteration
    layout: AntennaLayout
    covs: TransmitCovariances
    feasible: bool
    omega: float
    nu: float
    eta: float
    sinr: np.ndarray  # from the extracted beamformers
    p_d: float
    iterations: int
    converged: bool
    wall_time: float
    channels: ChannelSet
    gamma: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.trace[-1].rho if self.trace else float("nan")


# --------------------------------------------------------------------------
# the AO loop


def _fractional_change(new, old):
    return abs(new - old) / max(abs(old), 1e-300)


def run(
    config: ScenarioConfig,
    mode: SchemeMode | str = SchemeMode.DS_FAS,
    *,
    trial: int = 0,
    channels: ChannelSet | None = None,
    genie: bool = False,
    convention: str = "half",
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    ga: rxpos.GAConfig = rxpos.GAConfig(),
    rx_feasibility: bool = False,
    eta: float | None = None,
) -> RunResult:
    """Run the alternating optimization for one scheme on one channel draw.

    ``channels`` overrides the draw for ``trial`` so several schemes can share
    one realization.  ``rx_feasibility`` swaps the receive-side ascent for
    the stop-at-first-feasible baseline.
    """
    mode = SchemeMode.parse(mode) if isinstance(mode, str) else mode
    t_start = time.perf_counter()
    ch = channels if channels is not None else generate_scenario(config, trial)[1]
    layout = init_layout(mode, config)
    weights = sensing_weights(ch, genie=genie)
    n_tot = config.n * config.m_t
    K = ch.k
    state = SystemState(
        layout=layout, ch=ch, weights=weights,
        R_k=np.zeros((K, n_tot, n_tot), complex), R=np.zeros((n_tot, n_tot), complex),
        gamma=config.gamma_linear, eta=1.0,
    )
    moves = mode.moves_tx or mode.moves_rx
    trace: list[IterationRecord] = []
    converged = False
    eta_cur = eta
    bf = None
    stats = {"tx_rejected": 0, "tx_skipped": 0, "eta_doublings": 0}

    for it in range(1, max_iter + 1):
        H = state.rows()
        # the penalty weight is settled on the first solve and then frozen so
        # that rho stays one fixed function across iterations
        bf = beamforming.solve_beamforming(
            H, ch.noise_ue, state.gamma, state.Q(), config.m_t, ch.p_t,
            eta=eta_cur, adapt_eta=(it == 1),
        )
        eta_cur = bf.eta
        stats["eta_doublings"] += bf.eta_doublings
        state.R_k, state.R, state.eta = bf.R_k, bf.R, bf.eta

        if mode.moves_tx:
            for upd in txpos.sweep_all(state):
                if not upd.accepted:
                    key = "tx_rejected" if upd.status == "rejected" else "tx_skipped"
                    stats[key] += 1
        if mode.moves_rx:
            rxpos.optimize_all(state, ga, feasibility=rx_feasibility, guard=not rx_feasibility)

        H = state.rows()
        rec = IterationRecord(
            omega=state.omega(), nu=state.nu(H), rho=state.rho(), sinr=state.sinrs(H),
        )
        trace.append(rec)
        log.debug("iter %d: omega %.6g nu %.3g rho %.6g", it, rec.omega, rec.nu, rec.rho)
        if not moves:
            converged = True
            break
        if it > 1 and _fractional_change(rec.rho, trace[-2].rho) < eps:
            converged = True
            break

    # final beamformers at the final positions
    H = state.rows()
    beams, R_0 = beamforming.extract_rank1(state.R_k, state.R, H)
    covs = TransmitCovariances(
        R_k=np.einsum("ki,kj->kij", beams, beams.conj()),
        R=state.R.copy(),
        beams=beams,
        sensing_beams=beamforming.sensing_beams(R_0),
    )
    sinrs = np.array([sinr(H[k], covs.R_k[k], covs.R, ch.noise_ue[k]) for k in range(K)])
    feasible = bool(np.all(sinrs >= state.gamma * (1 - rxpos.SINR_RTOL)))
    om = max(state.omega(), 0.0)
    det = DetectorConfig(q=ch.m_r * ch.m_t, p_fa=config.p_fa, convention=convention)
    return RunResult(
        mode=mode, trace=trace, layout=state.layout, covs=covs, feasible=feasible,
        omega=om, nu=state.nu(H), eta=state.eta, sinr=sinrs,
        p_d=detection_probability(om, det), iterations=len(trace), converged=converged,
        wall_time=time.perf_counter() - t_start, channels=ch, gamma=state.gamma.copy(),
        info=stats | {"last_solver_status": bf.status if bf else None},
    )


# --------------------------------------------------------------------------
# audit


@dataclass
class ConstraintReport:
    """Worst slack per constraint family; negative means violated."""

    slacks: dict
    tol: float = 1e-6

    @property
    def violations(self) -> list:
        return [name for name, v in self.slacks.items() if v < -self.tol]

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self):
        return [f"{name},{v:.6g},{'ok' if v >= -self.tol else 'VIOLATED'}" for name, v in self.slacks.items()]


def verify_constraints(result: RunResult, tol: float = 1e-6) -> ConstraintReport:
    """Recompute every constraint family from scratch on the final solution.

    C1 SINR (relative to gamma), C2 per-transmitter power (relative to P_t),
    C3/C4 region membership (wavelengths), C5 transmit separation
    (wavelengths), C6 positive semidefiniteness (relative to tr R).
    """
    ch, lay, covs = result.channels, result.layout, result.covs
    H = channel_rows(lay, ch)
    K, n = ch.k, lay.n
    sl = {}

    if K:
        s = np.array([sinr(H[k], covs.R_k[k], covs.R, ch.noise_ue[k]) for k in range(K)])
        g = result.gamma
        sl["C1_sinr"] = float(np.min((s - g) / np.maximum(g, 1.0)))
    else:
        sl["C1_sinr"] = 0.0
    power = covs.tx_powers(n)
    sl["C2_power"] = float(np.min(ch.p_t - power) / ch.p_t)
    hx, hy = lay.tx_half
    sl["C3_tx_region"] = float(np.min(np.concatenate([
        hx - np.abs(lay.tx[..., 0]).ravel(), hy - np.abs(lay.tx[..., 1]).ravel()])))
    rx_x, rx_y = lay.rx_half
    sl["C4_rx_region"] = float(np.min(np.concatenate([
        [np.inf], rx_x - np.abs(lay.rx[:, 0]), rx_y - np.abs(lay.rx[:, 1])])))
    if not np.isfinite(sl["C4_rx_region"]):
        sl["C4_rx_region"] = 0.0
    sep = min(_min_pairwise(lay.tx[t]) for t in range(lay.m_t))
    sl["C5_separation"] = float(sep - txpos.MIN_SEPARATION) if np.isfinite(sep) else 0.0
    scale = max(float(np.real(np.trace(covs.R))), 1e-300)
    eigs = [np.linalg.eigvalsh(covs.R).min(), np.linalg.eigvalsh(covs.R_0).min()]
    eigs += [np.linalg.eigvalsh(covs.R_k[k]).min() for k in range(K)]
    sl["C6_psd"] = float(min(eigs) / scale)
    return ConstraintReport(sl, tol)
