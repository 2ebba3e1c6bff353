"""Minorize-maximize updates of individual transmit antenna positions.

For a single element m = (t, n) with everything else fixed, both the QoS gap
zeta_k and the sensing objective omega are trigonometric polynomials in the
element position u:

    zeta_k(u) = a(u)^H P a(u) + 2 Re{a(u)^H q} + eps,   P = r g g^H
    omega(u)  = p + 2 Re{conj(a0(u)) q0} + eps0

Each is minorized by a concave quadratic touching at the current position;
the resulting per-element problem is a small SOCP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import conic
from .physics import SystemState, coupling_matrix, directions

__all__ = [
    "SurrogateCoeffs",
    "SensingCoeffs",
    "ElementUpdate",
    "surrogate_coeffs",
    "omega_coeffs",
    "surrogate_zeta",
    "surrogate_omega",
    "optimize_element",
    "sweep_all",
    "MIN_SEPARATION",
]

log = logging.getLogger(__name__)

MIN_SEPARATION = 0.5  # wavelengths
TWO_PI = 2.0 * np.pi


@dataclass
class SurrogateCoeffs:
    """zeta_k as a function of one element position (unnormalized)."""

    P: np.ndarray  # (L, L) Hermitian, rank one
    q: np.ndarray  # (L,)
    eps: float
    dirs: np.ndarray  # (L, 2) transmit path directions

    def field(self, u):
        return np.exp(-1j * TWO_PI * (self.dirs @ u))

    def value(self, u) -> float:
        a = self.field(np.asarray(u, float))
        return float(np.real(a.conj() @ self.P @ a) + 2 * np.real(a.conj() @ self.q) + self.eps)

    def gradient(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        iu = np.triu_indices(len(self.q), 1)
        dw = self.dirs[iu[0]] - self.dirs[iu[1]]
        Pu = self.P[iu]
        g = -2 * TWO_PI * (np.abs(Pu) * np.sin(np.angle(Pu) + TWO_PI * (dw @ u))) @ dw
        g -= 2 * TWO_PI * (np.abs(self.q) * np.sin(np.angle(self.q) + TWO_PI * (self.dirs @ u))) @ self.dirs
        return g

    def delta_paper(self) -> float:
        iu = np.triu_indices(len(self.q), 1)
        return float(16 * np.pi**2 * (np.abs(self.P[iu]).sum() + np.abs(self.q).sum()))

    def delta_rigorous(self) -> float:
        """Spectral bound on the Hessian: 8 pi^2 (sum |P| |dw|^2 + sum |q| |w|^2)."""
        iu = np.triu_indices(len(self.q), 1)
        dw = self.dirs[iu[0]] - self.dirs[iu[1]]
        return float(8 * np.pi**2 * (np.abs(self.P[iu]) @ np.sum(dw**2, axis=1)
                                     + np.abs(self.q) @ np.sum(self.dirs**2, axis=1)))

    @property
    def delta(self) -> float:
        # the published constant assumes |dw|^2 <= 2, which can fail, so the
        # larger of the two is used to keep the minorization valid
        return max(self.delta_paper(), self.delta_rigorous())


@dataclass
class SensingCoeffs:
    """omega as a function of one element position (unnormalized)."""

    p: float
    q: complex
    eps: float
    dir: np.ndarray  # (2,)

    def value(self, u) -> float:
        a = np.exp(-1j * TWO_PI * (self.dir @ np.asarray(u, float)))
        return float(self.p * abs(a) ** 2 + 2 * np.real(np.conj(a) * self.q) + self.eps)

    def gradient(self, u) -> np.ndarray:
        ph = np.angle(self.q) + TWO_PI * (self.dir @ np.asarray(u, float))
        return -2 * TWO_PI * abs(self.q) * np.sin(ph) * self.dir

    @property
    def delta(self) -> float:
        return float(16 * np.pi**2 * abs(self.q))


def _element_index(state: SystemState, t: int, n: int) -> int:
    return t * state.layout.n + n


def surrogate_coeffs(state: SystemState, t: int, n: int, k: int, rows=None) -> SurrogateCoeffs:
    ch, lay = state.ch, state.layout
    H = state.rows() if rows is None else rows
    m = _element_index(state, t, n)
    g_k = state.gamma[k]
    Rt = (1 + g_k) * state.R_k[k] - g_k * state.R
    b = np.exp(-1j * TWO_PI * (directions(ch.aoa[t, k]) @ lay.rx[k]))
    g = b * np.conj(ch.upsilon[t, k])  # entry m of h_k^H is g^H a(u)
    r = float(np.real(Rt[m, m]))
    P = r * np.outer(g, g.conj())
    c = H[k]
    s = Rt[:, m] @ c - Rt[m, m] * c[m]  # sum over j != m of Rt[j, m] c_j
    q = g * s
    coeffs = SurrogateCoeffs(P, q, 0.0, directions(ch.aod[t, k]))
    current = float(np.real(c @ Rt @ c.conj())) - g_k * ch.noise_ue[k]
    coeffs.eps = current - coeffs.value(lay.tx[t, n])
    return coeffs


def omega_coeffs(state: SystemState, t: int, n: int) -> SensingCoeffs:
    w = state.weights
    m = _element_index(state, t, n)
    a0 = state.steering()
    c = np.kron(coupling_matrix(w), np.ones((w.n, w.n)))
    scale = w.snapshots * w.n
    R = state.R
    p = float(np.real(scale * c[m, m] * R[m, m]))
    terms = c[m] * R[m] * a0
    q = complex(scale * (terms.sum() - terms[m]))
    coeffs = SensingCoeffs(p, q, 0.0, directions(state.ch.sensing_aod[t]))
    coeffs.eps = state.omega() - coeffs.value(state.layout.tx[t, n])
    return coeffs


def surrogate_zeta(u, u0, coeffs: SurrogateCoeffs) -> float:
    """Concave quadratic minorant of zeta touching at ``u0``."""
    d = np.asarray(u, float) - np.asarray(u0, float)
    return coeffs.value(u0) + coeffs.gradient(u0) @ d - 0.5 * coeffs.delta * (d @ d)


def surrogate_omega(u, u0, coeffs: SensingCoeffs) -> float:
    d = np.asarray(u, float) - np.asarray(u0, float)
    return coeffs.value(u0) + coeffs.gradient(u0) @ d - 0.5 * coeffs.delta * (d @ d)


@dataclass
class ElementUpdate:
    position: np.ndarray
    accepted: bool
    rho_before: float
    rho_after: float
    status: str


def _build_socp(u0, lo, hi, neighbours, quads, eta_bar):
    """Standard-form SOCP for one element.

    ``quads`` is a list of (value, gradient, delta) in normalized units; the
    first entry is the sensing objective, the rest are QoS constraints.
    Variables: LP block [p (2), w (2), e_half (J), e_qos (K), nu], then one
    4-dim second-order cone per quadratic: (t+1, t-1, sqrt(2 delta) d).
    """
    J, K = len(neighbours), len(quads) - 1
    n_lp = 4 + J + K + 1
    i_p, i_w, i_h, i_e, i_nu = 0, 2, 4, 4 + J, 4 + J + K
    nq = len(quads)
    nvar = n_lp + 4 * nq
    rows, rhs = [], []

    def row():
        r = np.zeros(nvar)
        rows.append(r)
        return r

    for d in range(2):  # p + w = hi - lo
        r = row()
        r[i_p + d] = 1.0
        r[i_w + d] = 1.0
        rhs.append(hi[d] - lo[d])
    for j, uj in enumerate(neighbours):  # half-plane n.(lo + p - uj) - e = 1/2
        nv = u0 - uj
        nv = nv / np.linalg.norm(nv)
        r = row()
        r[i_p:i_p + 2] = nv
        r[i_h + j] = -1.0
        rhs.append(MIN_SEPARATION - nv @ (lo - uj))
    for qi, (val, grad, delta) in enumerate(quads):
        z = n_lp + 4 * qi
        r = row()  # z0 - z1 = 2
        r[z], r[z + 1] = 1.0, -1.0
        rhs.append(2.0)
        sq = np.sqrt(2.0 * max(delta, 0.0))
        for d in range(2):  # z_{2+d} = sqrt(2 delta) (lo + p - u0)
            r = row()
            r[z + 2 + d] = 1.0
            r[i_p + d] = -sq
            rhs.append(sq * (lo[d] - u0[d]))
        if qi > 0:  # val + grad.(lo + p - u0) - t + nu - e = 0
            r = row()
            r[i_p:i_p + 2] = grad
            r[z], r[z + 1] = -0.5, -0.5
            r[i_nu] = 1.0
            r[i_e + qi - 1] = -1.0
            rhs.append(-val - grad @ (lo - u0))
    c = np.zeros(nvar)
    val0, grad0, _ = quads[0]
    c[i_p:i_p + 2] = -grad0
    z = n_lp
    c[z], c[z + 1] = 0.5, 0.5
    c[i_nu] = eta_bar
    cones = [conic.Cone("l", n_lp)] + [conic.Cone("q", 4)] * nq
    return conic.ConicProblem(c, np.array(rows), np.array(rhs), cones), i_p


def optimize_element(state: SystemState, t: int, n: int, rows=None) -> ElementUpdate:
    """One MM step on element (t, n); updates ``state.layout`` in place if accepted."""
    lay = state.layout
    u0 = lay.tx[t, n].copy()
    hx, hy = lay.tx_half
    lo, hi = np.array([-hx, -hy]), np.array([hx, hy])
    rho0 = state.rho()
    if np.any(hi - lo <= 0):
        return ElementUpdate(u0, False, rho0, rho0, "degenerate-region")

    H = state.rows() if rows is None else rows
    noise = state.ch.noise_ue
    ref = state.omega_ref
    sc = omega_coeffs(state, t, n)
    quads = [(sc.value(u0) / ref, sc.gradient(u0) / ref, sc.delta / ref)]
    for k in range(state.ch.k):
        cf = surrogate_coeffs(state, t, n, k, H)
        quads.append((cf.value(u0) / noise[k], cf.gradient(u0) / noise[k], cf.delta / noise[k]))
    neighbours = [lay.tx[t, j] for j in range(lay.n) if j != n]
    prob, i_p = _build_socp(u0, lo, hi, neighbours, quads, state.eta / ref)
    sol = conic.solve(prob)
    if not sol.ok:
        log.info("element (%d, %d) update skipped: conic status %s", t, n, sol.status)
        return ElementUpdate(u0, False, rho0, rho0, sol.status)

    u1 = np.clip(lo + sol.x[i_p:i_p + 2], lo, hi)
    lay.tx[t, n] = u1
    rho1 = state.rho()
    if rho1 < rho0 - 1e-9 * abs(rho0) or not _separated(lay.tx[t], n):
        lay.tx[t, n] = u0
        log.info("element (%d, %d) update rejected (rho %.6g -> %.6g)", t, n, rho0, rho1)
        return ElementUpdate(u0, False, rho0, rho0, "rejected")
    if rho1 <= rho0:
        # flat objective: the solver's pick is arbitrary, so stay put
        lay.tx[t, n] = u0
        return ElementUpdate(u0, False, rho0, rho0, "no-gain")
    return ElementUpdate(u1, True, rho0, rho1, sol.status)


def _separated(U, n, tol=1e-9):
    d = np.linalg.norm(np.delete(U, n, axis=0) - U[n], axis=1)
    return bool(np.all(d >= MIN_SEPARATION - tol))


def sweep_all(state: SystemState) -> list:
    """One pass over all transmit elements in ascending (t, n) order."""
    out = []
    for t in range(state.layout.m_t):
        for n in range(state.layout.n):
            out.append(optimize_element(state, t, n))
    return out
