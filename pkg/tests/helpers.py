"""Shared builders for the test suite."""

import numpy as np

from dsfas.physics import AntennaLayout, SystemState, sensing_weights
from dsfas.scenario import ScenarioConfig, generate_scenario


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    B = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * (B @ B.conj().T) / n


def grid_layout(cfg, rng=None, jitter=0.0):
    """Corner-ish starting layout, optionally jittered while keeping separation."""
    base = np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]])[: cfg.n]
    tx = np.repeat(base[None], cfg.m_t, axis=0).astype(float)
    if rng is not None and jitter:
        tx = tx + rng.uniform(-jitter, jitter, tx.shape)
    half = cfg.region_tx_lambda / 2
    rh = cfg.region_rx_lambda / 2
    rx = np.zeros((cfg.k, 2)) if rng is None else rng.uniform(-rh, rh, (cfg.k, 2))
    return AntennaLayout(tx, rx, (half, half), (rh, rh))


def random_state(seed, *, cfg=None, rank=None, gamma=None, jitter=0.2):
    """A SystemState with random PSD covariances (no optimization involved)."""
    cfg = cfg or ScenarioConfig(model="normalized", gamma=2.0)
    rng = np.random.default_rng(seed)
    ch = generate_scenario(cfg, seed)[1]
    lay = grid_layout(cfg, rng, jitter)
    n = cfg.n * cfg.m_t
    R_k = np.array([random_psd(rng, n, rank, 0.05) for _ in range(cfg.k)])
    R = R_k.sum(axis=0) + random_psd(rng, n, None, 0.1)
    g = cfg.gamma_linear if gamma is None else gamma
    return SystemState(lay, ch, sensing_weights(ch), R_k, R, g, 50.0)



# (criterion number, passed, detail) rows collected by the acceptance suite
ACCEPTANCE = []
