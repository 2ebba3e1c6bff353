"""Field-response geometry, channels, SINR and the sensing objective.

Antenna coordinates are in wavelengths, so the phase of a path with
direction ``w`` at position ``u`` is ``2*pi*w.u``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelSet

__all__ = [
    "AntennaLayout",
    "TransmitCovariances",
    "SensingWeights",
    "NumericsWarning",
    "directions",
    "tx_field_vector",
    "field_matrix",
    "channel_vector",
    "channel_rows",
    "sensing_steering",
    "sinr",
    "sinr_from_beams",
    "zeta_tilde",
    "block",
    "set_block",
    "sensing_weights",
    "coupling_matrix",
    "sensing_matrix",
    "omega",
    "hermitian",
    "omega_reference",
    "SystemState",
    "target_response",
    "sample_waveform",
]


class NumericsWarning(RuntimeWarning):
    pass


def directions(angles: np.ndarray) -> np.ndarray:
    """Map (elevation, azimuth) pairs to planar direction vectors."""
    angles = np.asarray(angles, dtype=float)
    phi, psi = angles[..., 0], angles[..., 1]
    return np.stack([np.sin(phi) * np.cos(psi), np.cos(phi)], axis=-1)


def tx_field_vector(u, aod_list) -> np.ndarray:
    """Per-path phase response at one position: exp(-j 2 pi w_l . u)."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("position must be finite")
    return np.exp(-2j * np.pi * (directions(aod_list) @ u))


def field_matrix(positions: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """L x N matrix whose column n is the field vector at ``positions[n]``."""
    return np.exp(-2j * np.pi * (dirs @ np.asarray(positions, dtype=float).T))


@dataclass
class AntennaLayout:
    tx: np.ndarray  # (M_t, N, 2) in wavelengths
    rx: np.ndarray  # (K, 2) in wavelengths
    tx_half: tuple = (1.0, 1.0)  # half-widths of the transmit region
    rx_half: tuple = (0.5, 0.5)

    def copy(self) -> "AntennaLayout":
        return AntennaLayout(self.tx.copy(), self.rx.copy(), self.tx_half, self.rx_half)

    @property
    def m_t(self):
        return self.tx.shape[0]

    @property
    def n(self):
        return self.tx.shape[1]


def channel_vector(U_t, v_k, upsilon, aod, aoa) -> np.ndarray:
    """Row vector h^H = b^H(v) diag(upsilon) A(U) for one transmitter-UE link."""
    b = np.exp(-2j * np.pi * (directions(aoa) @ np.asarray(v_k, dtype=float)))
    A = field_matrix(U_t, directions(aod))
    return (b.conj() * upsilon) @ A


def channel_rows(layout: AntennaLayout, ch: ChannelSet) -> np.ndarray:
    """(K, N*M_t) array whose row k is the stacked h_k^H."""
    K, mt, n = ch.k, ch.m_t, layout.n
    H = np.zeros((K, mt * n), dtype=complex)
    dod = directions(ch.aod)
    doa = directions(ch.aoa)
    for t in range(mt):
        ph_t = np.exp(-2j * np.pi * (dod[t] @ layout.tx[t].T))  # (K, L, N)
        ph_r = np.exp(2j * np.pi * np.einsum("klc,kc->kl", doa[t], layout.rx))  # conj(b)
        H[:, t * n:(t + 1) * n] = np.einsum("kl,kln->kn", ph_r * ch.upsilon[t], ph_t)
    return H


def sensing_steering(layout: AntennaLayout, ch: ChannelSet) -> np.ndarray:
    """Stacked transmit steering toward the target, length N*M_t."""
    d0 = directions(ch.sensing_aod)  # (M_t, 2)
    return np.exp(-2j * np.pi * np.einsum("tc,tnc->tn", d0, layout.tx)).ravel()


def target_response(layout: AntennaLayout, ch: ChannelSet, b_rx: np.ndarray | None = None) -> np.ndarray:
    """G_{t,r} = sqrt(beta_tr) b_r a_t^H stacked as (M_r, M_t, N, N)."""
    a0 = sensing_steering(layout, ch).reshape(ch.m_t, layout.n)
    b = ch.b_rx if b_rx is None else np.asarray(b_rx)
    sb = np.sqrt(ch.beta).T  # (M_r, M_t)
    return sb[:, :, None, None] * b[:, None, :, None] * a0.conj()[None, :, None, :]


def sample_waveform(R: np.ndarray, snapshots: int, rng: np.random.Generator, m_t: int) -> np.ndarray:
    """Gaussian snapshots with covariance R, returned as (T, M_t, N)."""
    R = hermitian(R)
    w, V = np.linalg.eigh(R)
    root = V * np.sqrt(np.maximum(w, 0.0))
    n = R.shape[0]
    z = (rng.standard_normal((snapshots, n)) + 1j * rng.standard_normal((snapshots, n))) / np.sqrt(2)
    return (z @ root.T).reshape(snapshots, m_t, n // m_t)


def hermitian(R: np.ndarray, *, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R)
    skew = R - R.conj().swapaxes(-1, -2)
    scale = max(np.abs(R).max(), 1e-300)
    if np.abs(skew).max() > 2 * tol * scale:
        raise ValueError("covariance is not Hermitian")
    return 0.5 * (R + R.conj().swapaxes(-1, -2))


@dataclass
class TransmitCovariances:
    R_k: np.ndarray  # (K, n, n)
    R: np.ndarray  # (n, n)
    beams: np.ndarray | None = None  # (K, n) extracted beamformers
    sensing_beams: list = field(default_factory=list)  # [(power, unit vector)]

    @property
    def R_0(self):
        return self.R - self.R_k.sum(axis=0)

    def tx_powers(self, n: int) -> np.ndarray:
        d = np.real(np.diag(self.R))
        return d.reshape(-1, n).sum(axis=1)


def _quad(h_row, R):
    return float(np.real(h_row @ R @ h_row.conj()))


def sinr(h_row: np.ndarray, R_k: np.ndarray, R: np.ndarray, noise: float) -> float:
    """SINR from covariances; ``h_row`` is the stacked h_k^H."""
    sig = _quad(h_row, R_k)
    interf = _quad(h_row, R) - sig
    if interf < 0:
        if interf < -1e-9 * max(abs(sig), 1e-300):
            warnings.warn("negative interference clamped to zero", NumericsWarning, stacklevel=2)
        interf = 0.0
    return max(sig, 0.0) / (interf + noise)


def sinr_from_beams(h_row, beams: np.ndarray, k: int, R_0: np.ndarray, noise: float) -> float:
    """Beamformer form: |h^H w_k|^2 / (sum_j!=k |h^H w_j|^2 + h^H R_0 h + sigma^2)."""
    g = np.abs(beams @ h_row) ** 2  # h^H w_j for each j
    return float(g[k] / (g.sum() - g[k] + _quad(h_row, R_0) + noise))


def zeta_tilde(h_row, R_k, R, gamma: float, noise: float) -> float:
    """h^H[(1+gamma) R_k - gamma R]h - gamma sigma^2; nonnegative iff SINR >= gamma."""
    return (1 + gamma) * _quad(h_row, R_k) - gamma * _quad(h_row, R) - gamma * noise


def block(A: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    """Sub-block E_i A E_j^H (zero-based indices)."""
    m = A.shape[0] // n
    if not (0 <= i < m and 0 <= j < m):
        raise IndexError("block index out of range")
    return A[i * n:(i + 1) * n, j * n:(j + 1) * n]


def set_block(A, i, j, n, value):
    A[i * n:(i + 1) * n, j * n:(j + 1) * n] = value


@dataclass
class SensingWeights:
    psi: np.ndarray  # (M_r M_t, M_r M_t) Hermitian, index r * M_t + t
    beta: np.ndarray  # (M_t, M_r)
    snapshots: int
    n: int

    @property
    def m_t(self):
        return self.beta.shape[0]

    @property
    def m_r(self):
        return self.beta.shape[1]


def sensing_weights(ch: ChannelSet, *, genie: bool = False) -> SensingWeights:
    """Expected weights E{aa^H}/sigma_r^2, or the realized ones when ``genie``."""
    if genie:
        psi = np.outer(ch.alpha, ch.alpha.conj()) / ch.noise_rx
    else:
        psi = np.diag(ch.rcs_var.T.ravel()).astype(complex) / ch.noise_rx
    return SensingWeights(psi, ch.beta, ch.snapshots, ch.n)


def coupling_matrix(w: SensingWeights) -> np.ndarray:
    """c_ij = sum_r [Psi_r]_ij sqrt(beta_ir beta_jr), an M_t x M_t matrix."""
    mt, mr = w.m_t, w.m_r
    c = np.zeros((mt, mt), dtype=complex)
    for r in range(mr):
        sub = w.psi[r * mt:(r + 1) * mt, r * mt:(r + 1) * mt]
        sb = np.sqrt(w.beta[:, r])
        c += sub * np.outer(sb, sb)
    return c


def sensing_matrix(a0: np.ndarray, w: SensingWeights) -> np.ndarray:
    """Hermitian Q with omega(R) = Re tr(Q R) for the stacked steering ``a0``."""
    c = coupling_matrix(w)
    ct = np.kron(c, np.ones((w.n, w.n)))
    Q = w.snapshots * w.n * (ct.T * np.outer(a0, a0.conj()))
    return 0.5 * (Q + Q.conj().T)


def omega(R: np.ndarray, layout: AntennaLayout, ch: ChannelSet, w: SensingWeights) -> float:
    """Sensing noncentrality, evaluated by the explicit double block sum."""
    R = hermitian(R)
    a0 = sensing_steering(layout, ch).reshape(ch.m_t, layout.n)
    c = coupling_matrix(w)
    n = layout.n
    total = 0.0 + 0.0j
    for i in range(ch.m_t):
        for j in range(ch.m_t):
            total += c[i, j] * (a0[i].conj() @ block(R, i, j, n) @ a0[j])
    total *= w.snapshots * n
    if abs(total.imag) > 1e-9 * max(abs(total.real), 1e-300) and abs(total.imag) > 1e-300:
        raise ValueError("sensing objective has a non-negligible imaginary part")
    return float(total.real)


def omega_reference(w: SensingWeights, p_t: float) -> float:
    """omega of isotropic full power, (P_t / N) tr(Q); independent of positions."""
    c = coupling_matrix(w)
    return float(w.snapshots * w.n * p_t * np.sum(np.real(np.diag(c))))


@dataclass
class SystemState:
    """Everything the position subproblems need, with covariances held fixed."""

    layout: AntennaLayout
    ch: ChannelSet
    weights: SensingWeights
    R_k: np.ndarray
    R: np.ndarray
    gamma: np.ndarray
    eta: float

    def __post_init__(self):
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.ch.k,)).copy()
        self.omega_ref = omega_reference(self.weights, self.ch.p_t) or 1.0

    def rows(self) -> np.ndarray:
        return channel_rows(self.layout, self.ch)

    def steering(self) -> np.ndarray:
        return sensing_steering(self.layout, self.ch)

    def Q(self) -> np.ndarray:
        return sensing_matrix(self.steering(), self.weights)

    def omega(self) -> float:
        return float(np.real(np.sum(self.Q().T * self.R)))

    def zetas(self, rows=None) -> np.ndarray:
        """zeta_k / sigma_k^2 for every UE."""
        H = self.rows() if rows is None else rows
        return np.array([
            zeta_tilde(H[k], self.R_k[k], self.R, self.gamma[k], self.ch.noise_ue[k]) / self.ch.noise_ue[k]
            for k in range(self.ch.k)
        ])

    def sinrs(self, rows=None) -> np.ndarray:
        H = self.rows() if rows is None else rows
        return np.array([sinr(H[k], self.R_k[k], self.R, self.ch.noise_ue[k]) for k in range(self.ch.k)])

    def nu(self, rows=None) -> float:
        z = self.zetas(rows)
        return max(0.0, float(-z.min())) if z.size else 0.0

    def rho(self) -> float:
        return self.omega() - self.eta * self.nu()
