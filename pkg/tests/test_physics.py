import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dsfas.detection import glr_matrix
from dsfas.physics import (
    AntennaLayout,
    NumericsWarning,
    block,
    channel_rows,
    channel_vector,
    directions,
    hermitian,
    omega,
    sample_waveform,
    sensing_matrix,
    sensing_steering,
    sensing_weights,
    sinr,
    sinr_from_beams,
    target_response,
    tx_field_vector,
    zeta_tilde,
)
from dsfas.scenario import ScenarioConfig, generate_scenario

from helpers import grid_layout, random_psd


def _naive_field(u, angles):
    out = []
    for phi, psi in angles:
        w = (np.sin(phi) * np.cos(psi), np.cos(phi))
        out.append(np.exp(-2j * np.pi * (w[0] * u[0] + w[1] * u[1])))
    return np.array(out)


def test_field_vector_at_origin_is_ones():
    ang = np.random.default_rng(0).uniform(0, np.pi, (12, 2))
    assert np.allclose(tx_field_vector([0.0, 0.0], ang), 1.0, atol=0)


def test_field_vector_unit_modulus_and_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        ang = rng.uniform(0, np.pi, (12, 2))
        u = rng.uniform(-3, 3, 2)
        a = tx_field_vector(u, ang)
        assert np.allclose(np.abs(a), 1.0, atol=1e-12)
        assert np.allclose(a, _naive_field(u, ang), atol=1e-12)


def test_field_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        tx_field_vector([np.nan, 0.0], np.zeros((1, 2)))


def test_null_channel_is_zero():
    rng = np.random.default_rng(2)
    U = rng.uniform(-1, 1, (4, 2))
    h = channel_vector(U, [0.1, 0.2], np.zeros(12), rng.uniform(0, np.pi, (12, 2)), rng.uniform(0, np.pi, (12, 2)))
    assert np.all(h == 0)


def test_single_path_channel_has_unit_entries():
    rng = np.random.default_rng(3)
    U = rng.uniform(-1, 1, (4, 2))
    h = channel_vector(U, [0.3, -0.1], np.ones(1), rng.uniform(0, np.pi, (1, 2)), rng.uniform(0, np.pi, (1, 2)))
    assert np.allclose(np.abs(h), 1.0, atol=1e-12)


def test_channel_rows_match_triple_loop():
    cfg = ScenarioConfig(model="normalized")
    _, ch = generate_scenario(cfg, 4)
    lay = grid_layout(cfg, np.random.default_rng(4), 0.2)
    H = channel_rows(lay, ch)
    for k in range(ch.k):
        for t in range(ch.m_t):
            for n in range(cfg.n):
                acc = 0j
                for l in range(ch.l):
                    w_t = directions(ch.aod[t, k, l])
                    w_r = directions(ch.aoa[t, k, l])
                    b = np.exp(-2j * np.pi * (w_r @ lay.rx[k]))
                    a = np.exp(-2j * np.pi * (w_t @ lay.tx[t, n]))
                    acc += np.conj(b) * ch.upsilon[t, k, l] * a
                assert abs(H[k, t * cfg.n + n] - acc) <= 1e-12 * max(1.0, abs(acc))
        row = np.concatenate([channel_vector(lay.tx[t], lay.rx[k], ch.upsilon[t, k], ch.aod[t, k], ch.aoa[t, k])
                              for t in range(ch.m_t)])
        assert np.allclose(row, H[k], atol=1e-12)


def test_sinr_trivial_cases():
    rng = np.random.default_rng(5)
    h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    R = random_psd(rng, 8)
    assert sinr(h, np.zeros((8, 8)), R, 0.5) == 0.0
    assert sinr(h, R, R, 0.5) == pytest.approx(np.real(h @ R @ h.conj()) / 0.5, rel=1e-12)


def test_sinr_beam_form_agrees():
    rng = np.random.default_rng(6)
    n, K = 8, 3
    for _ in range(50):
        W = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
        R0 = random_psd(rng, n, 2)
        R_k = np.einsum("ki,kj->kij", W, W.conj())
        R = R_k.sum(axis=0) + R0
        h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        for k in range(K):
            a = sinr(h, R_k[k], R, 0.3)
            b = sinr_from_beams(h, W, k, R0, 0.3)
            assert abs(a - b) <= 1e-10 * abs(b)


def test_negative_interference_is_clamped_with_warning():
    h = np.array([1.0, 0.0])
    R_k = np.eye(2)
    R = 0.5 * np.eye(2)  # deliberately R < R_k
    with pytest.warns(NumericsWarning):
        val = sinr(h, R_k, R, 2.0)
    assert val == pytest.approx(0.5)


def test_zeta_trivial_cases():
    rng = np.random.default_rng(7)
    h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    Rk, R = random_psd(rng, 6), random_psd(rng, 6)
    assert zeta_tilde(h, Rk, R, 0.0, 1.0) == pytest.approx(np.real(h @ Rk @ h.conj()))
    assert zeta_tilde(np.zeros(6), Rk, R, 3.0, 0.5) == pytest.approx(-1.5)


def test_zeta_sign_matches_sinr_threshold():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = 6
        h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        Rk = random_psd(rng, n, 1)
        R = Rk + random_psd(rng, n)
        g = rng.uniform(0, 5)
        s2 = rng.uniform(0.01, 2)
        z = zeta_tilde(h, Rk, R, g, s2)
        s = sinr(h, Rk, R, s2)
        if abs(s - g) > 1e-10 * max(g, 1):
            assert (z >= 0) == (s >= g)


def test_block_selection():
    n, m = 3, 4
    eye = np.eye(n * m)
    assert np.array_equal(block(eye, 1, 1, n), np.eye(n))
    assert np.array_equal(block(eye, 0, 2, n), np.zeros((n, n)))
    A = np.random.default_rng(9).standard_normal((n * m, n * m))
    for i in range(m):
        for j in range(m):
            Ei = np.zeros((n, n * m))
            Ei[:, i * n:(i + 1) * n] = np.eye(n)
            Ej = np.zeros((n, n * m))
            Ej[:, j * n:(j + 1) * n] = np.eye(n)
            assert np.allclose(block(A, i, j, n), Ei @ A @ Ej.T, atol=0)
    with pytest.raises(IndexError):
        block(A, m, 0, n)


def test_hermitian_guard():
    with pytest.raises(ValueError):
        hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))
    A = np.array([[1.0, 1 + 1e-12], [1.0, 1.0]])
    assert np.allclose(hermitian(A), hermitian(A).conj().T)


def _scenario(seed=0, **kw):
    cfg = ScenarioConfig(model="normalized", **kw)
    _, ch = generate_scenario(cfg, seed)
    lay = grid_layout(cfg, np.random.default_rng(seed), 0.2)
    return cfg, ch, lay


def test_omega_zero_power_and_trace_form():
    cfg, ch, lay = _scenario(1)
    w = sensing_weights(ch)
    n = cfg.n * cfg.m_t
    assert omega(np.zeros((n, n)), lay, ch, w) == 0.0
    R = random_psd(np.random.default_rng(1), n)
    Q = sensing_matrix(sensing_steering(lay, ch), w)
    assert omega(R, lay, ch, w) == pytest.approx(np.real(np.trace(Q @ R)), rel=1e-12)


def _omega_through_receivers(R, lay, ch, w, b_rx):
    """sum_r sum_ij Psi_r[i,j] T tr(G_jr^H G_ir R_ij) with explicit receive steering."""
    G = target_response(lay, ch, b_rx)
    mt, mr, n = ch.m_t, ch.m_r, lay.n
    total = 0j
    for r in range(mr):
        Psi_r = w.psi[r * mt:(r + 1) * mt, r * mt:(r + 1) * mt]
        for i in range(mt):
            for j in range(mt):
                Rij = R[i * n:(i + 1) * n, j * n:(j + 1) * n]
                total += Psi_r[i, j] * w.snapshots * np.trace(G[r, j].conj().T @ G[r, i] @ Rij)
    return total.real


@pytest.mark.parametrize("genie", [False, True])
def test_omega_does_not_depend_on_receive_steering(genie):
    cfg, ch, lay = _scenario(2)
    rng = np.random.default_rng(2)
    w = sensing_weights(ch, genie=genie)
    R = random_psd(rng, cfg.n * cfg.m_t)
    ref = omega(R, lay, ch, w)
    for _ in range(20):
        b = np.exp(2j * np.pi * rng.random((ch.m_r, cfg.n)))
        assert abs(_omega_through_receivers(R, lay, ch, w, b) - ref) <= 1e-10 * abs(ref)


def test_omega_against_sampled_regression_matrix():
    cfg, ch, lay = _scenario(3, t_snapshots=4000)
    rng = np.random.default_rng(3)
    w = sensing_weights(ch, genie=True)
    R = random_psd(rng, cfg.n * cfg.m_t)
    X = sample_waveform(R, w.snapshots, rng, cfg.m_t)
    Gt = glr_matrix(target_response(lay, ch), X)
    mc = np.real(np.trace(w.psi @ Gt.conj().T @ Gt))
    assert abs(mc / omega(R, lay, ch, w) - 1) < 0.05


@given(st.floats(0, 10), st.floats(0, 10), st.integers(0, 1000))
def test_omega_is_linear(a, b, seed):
    cfg, ch, lay = _scenario(seed % 7)
    rng = np.random.default_rng(seed)
    w = sensing_weights(ch)
    n = cfg.n * cfg.m_t
    R1, R2 = random_psd(rng, n), random_psd(rng, n)
    lhs = omega(a * R1 + b * R2, lay, ch, w)
    rhs = a * omega(R1, lay, ch, w) + b * omega(R2, lay, ch, w)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_sinr_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    Rk = random_psd(rng, 6, 1)
    R = Rk + random_psd(rng, 6)
    s = sinr(h, Rk, R, 0.7)
    assert sinr(h, c * Rk, c * R, c * 0.7) == pytest.approx(s, rel=1e-10)


@given(st.integers(0, 10_000), st.floats(0, 20))
def test_zeta_times_gap_is_nonnegative(seed, g):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    Rk = random_psd(rng, 6, 1)
    R = Rk + random_psd(rng, 6)
    z = zeta_tilde(h, Rk, R, g, 0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", NumericsWarning)
        s = sinr(h, Rk, R, 0.4)
    assert z * (s - g) >= -1e-10 * max(1.0, abs(z))


def test_layout_copy_is_deep():
    lay = AntennaLayout(np.zeros((1, 2, 2)), np.zeros((1, 2)))
    c = lay.copy()
    c.tx[0, 0, 0] = 1.0
    assert lay.tx[0, 0, 0] == 0.0
