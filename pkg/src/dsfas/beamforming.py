"""Penalized SDR beamforming: assemble, solve, and extract rank-one beams.

The relaxed problem maximizes ``omega(R) - eta * nu`` over covariances
``R_0, R_1..R_K >= 0`` with ``R = R_0 + sum R_k`` subject to

* ``zeta_k / sigma_k^2 + nu >= 0`` for every UE,
* ``tr(E_t R E_t^H) <= P_t`` for every transmitter,
* ``nu >= 0``.

Keeping ``R_0`` as its own PSD block enforces ``R - sum R_k >= 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .physics import TransmitCovariances, zeta_tilde

__all__ = [
    "BeamformingResult",
    "BeamformingError",
    "DegenerateExtractionError",
    "solve_beamforming",
    "extract_rank1",
    "sensing_beams",
    "uniform_omega",
    "default_eta",
    "ETA_FACTOR",
]

log = logging.getLogger(__name__)

ETA_FACTOR = 100.0
NU_TOL = 1e-7
MAX_DOUBLINGS = 12


class BeamformingError(RuntimeError):
    pass


class DegenerateExtractionError(ValueError):
    pass


@dataclass
class BeamformingResult:
    R_k: np.ndarray  # relaxed (K, n, n)
    R: np.ndarray
    nu: float
    omega: float
    zeta: np.ndarray  # normalized by the UE noise power
    eta: float
    covs: TransmitCovariances  # extracted
    status: str
    iterations: int
    eta_doublings: int = 0
    info: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.omega - self.eta * self.nu


def uniform_omega(Q: np.ndarray, n: int, p_t: float) -> float:
    """omega of uniform isotropic power R = (P_t / N) I."""
    return float(np.real(np.trace(Q))) * p_t / n


def default_eta(Q: np.ndarray, n: int, p_t: float) -> float:
    ref = uniform_omega(Q, n, p_t)
    return ETA_FACTOR * (ref if ref > 0 else 1.0)


def _embed_svec(C):
    return conic.svec(0.5 * conic.hermitian_embed(C))


def _assemble(H, noise, gamma, Q, n, mt, p_t, omega_ref, eta_bar, sensing=True):
    K = H.shape[0]
    nb = K + 1
    d = 2 * n
    sz = conic.svec_dim(d)
    n_lp = 1 + K + mt
    nvar = nb * sz + n_lp
    iv = nb * sz  # index of nu
    m = K + mt
    A = np.zeros((m, nvar))
    b = np.zeros(m)
    c = np.zeros(nvar)

    if sensing:
        qv = _embed_svec(Q) * (p_t / omega_ref)
        for blk in range(nb):
            c[blk * sz:(blk + 1) * sz] = -qv
    c[iv] = eta_bar

    for k in range(K):
        hv = _embed_svec(np.outer(H[k].conj(), H[k])) * (p_t / noise[k])
        g = gamma[k]
        for blk in range(nb):
            coef = 1.0 if blk == k + 1 else -g
            if coef != 0.0:
                A[k, blk * sz:(blk + 1) * sz] = coef * hv
        A[k, iv] = 1.0
        A[k, iv + 1 + k] = -1.0
        b[k] = g

    for t in range(mt):
        diag = np.zeros(n)
        diag[t * (n // mt):(t + 1) * (n // mt)] = 1.0
        ev = _embed_svec(np.diag(diag))
        row = K + t
        for blk in range(nb):
            A[row, blk * sz:(blk + 1) * sz] = ev
        A[row, iv + 1 + K + t] = 1.0
        b[row] = 1.0

    cones = [conic.Cone("s", d, embedded=True)] * nb + [conic.Cone("l", n_lp)]
    return conic.ConicProblem(c, A, b, cones), sz


def _recover(x, K, n, sz, p_t):
    blocks = []
    for blk in range(K + 1):
        S = conic.smat(x[blk * sz:(blk + 1) * sz], 2 * n)
        R = conic.hermitian_from_embedding(S) * p_t
        w, V = np.linalg.eigh(0.5 * (R + R.conj().T))
        w = np.maximum(w, 0.0)
        blocks.append((V * w) @ V.conj().T)
    R_0 = blocks[0]
    R_k = np.array(blocks[1:]) if K else np.zeros((0, n, n), dtype=complex)
    return R_0, R_k


def solve_beamforming(
    H: np.ndarray,
    noise: np.ndarray,
    gamma,
    Q: np.ndarray,
    m_t: int,
    p_t: float,
    eta: float | None = None,
    *,
    adapt_eta: bool = True,
) -> BeamformingResult:
    """Solve the penalized relaxation.

    ``H`` holds the stacked h_k^H as rows; ``Q`` is the sensing matrix with
    ``omega(R) = Re tr(Q R)``.  With ``adapt_eta`` the penalty is doubled
    while ``nu > 0`` even though the SINR constraints are jointly feasible.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex)) if np.size(H) else np.zeros((0, Q.shape[0]), complex)
    K, n = H.shape[0], Q.shape[0]
    if n % m_t:
        raise ValueError("covariance size is not a multiple of M_t")
    if p_t <= 0:
        raise BeamformingError("power budget must be positive")
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    Q = 0.5 * (Q + Q.conj().T)
    omega_ref = uniform_omega(Q, n // m_t, p_t)
    if omega_ref <= 0:
        omega_ref = 1.0
    if eta is None:
        eta = ETA_FACTOR * omega_ref
    if eta <= 0:
        raise ValueError("eta must be positive")

    doublings = 0
    feasible_nu = None
    while True:
        prob, sz = _assemble(H, noise, gamma, Q, n, m_t, p_t, omega_ref, eta / omega_ref)
        sol = conic.solve(prob)
        if sol.status in ("infeasible", "unbounded"):
            raise BeamformingError(f"beamforming relaxation reported {sol.status}")
        if not sol.ok:
            log.warning("beamforming solve ended with %s (pres %.2e, dres %.2e, gap %.2e)",
                        sol.status, sol.primal_residual, sol.dual_residual, sol.gap)
        nu = max(float(sol.x[(K + 1) * sz]), 0.0)
        if not adapt_eta or nu <= NU_TOL or doublings >= MAX_DOUBLINGS:
            break
        if feasible_nu is None:
            fprob, _ = _assemble(H, noise, gamma, Q, n, m_t, p_t, omega_ref, 1.0, sensing=False)
            fsol = conic.solve(fprob)
            feasible_nu = max(float(fsol.x[(K + 1) * sz]), 0.0)
        if feasible_nu > NU_TOL:
            break
        eta *= 2.0
        doublings += 1

    R_0, R_k = _recover(sol.x, K, n, sz, p_t)
    R = R_0 + R_k.sum(axis=0)
    zeta = np.array([zeta_tilde(H[k], R_k[k], R, gamma[k], noise[k]) / noise[k] for k in range(K)])
    nu = max(0.0, float(-zeta.min())) if K else 0.0
    omega = float(np.real(np.trace(Q @ R)))
    try:
        beams, R0x = extract_rank1(R_k, R, H, gamma)
    except DegenerateExtractionError:
        # only reachable when the QoS constraints are violated anyway
        log.info("a UE receives no useful power; its beam is left at zero")
        beams, R0x = extract_rank1(R_k, R, H)
    covs = TransmitCovariances(
        R_k=np.einsum("ki,kj->kij", beams, beams.conj()) if K else R_k,
        R=R,
        beams=beams,
        sensing_beams=sensing_beams(R0x),
    )
    return BeamformingResult(
        R_k=R_k, R=R, nu=nu, omega=omega, zeta=zeta, eta=eta, covs=covs,
        status=sol.status, iterations=sol.iterations, eta_doublings=doublings,
        info={"solver_nu": float(sol.x[(K + 1) * sz]), "feasible_nu": feasible_nu,
              "primal_residual": sol.primal_residual, "dual_residual": sol.dual_residual,
              "gap": sol.gap},
    )


def extract_rank1(R_k: np.ndarray, R: np.ndarray, H: np.ndarray, gamma=None):
    """Rank-one beams w_k = R_k h_k / sqrt(h_k^H R_k h_k) and the sensing remainder."""
    K = R_k.shape[0]
    n = R.shape[0]
    gamma = np.zeros(K) if gamma is None else np.broadcast_to(np.asarray(gamma, float), (K,))
    beams = np.zeros((K, n), dtype=complex)
    for k in range(K):
        h = H[k].conj()
        v = R_k[k] @ h
        p = float(np.real(h.conj() @ v))
        if p <= 0:
            if gamma[k] > 0:
                raise DegenerateExtractionError(f"UE {k} receives no useful power")
            continue
        beams[k] = v / np.sqrt(p)
    R_0 = R - beams.T @ beams.conj()
    return beams, 0.5 * (R_0 + R_0.conj().T)


def sensing_beams(R_0: np.ndarray, rel_tol: float = 1e-9):
    """Eigen-beams (power, unit vector) of the sensing covariance."""
    w, V = np.linalg.eigh(0.5 * (R_0 + R_0.conj().T))
    tr = float(np.sum(np.maximum(w, 0.0)))
    if tr <= 0:
        return []
    out = []
    for i in np.argsort(w)[::-1]:
        if w[i] < rel_tol * tr:
            break
        out.append((float(w[i]), V[:, i].copy()))
    return out
