import numpy as np
import pytest

from dsfas.optimizer import (
    PackingError,
    SchemeMode,
    cp_positions,
    init_layout,
    run,
    ula_positions,
    verify_constraints,
)
from dsfas.scenario import ScenarioConfig, generate_scenario

SMALL = dict(model="normalized", m_t=2, m_r=2, k=2, n=2, l=6)


def _min_sep(P):
    d = np.linalg.norm(P[:, None] - P[None], axis=-1)
    return d[np.triu_indices(len(P), 1)].min()


@pytest.mark.parametrize("n, half", [(2, 1.0), (4, 1.0), (5, 1.0), (9, 1.0), (4, 0.5)])
def test_circle_packing_fits_and_separates(n, half):
    P = cp_positions(n, half, half)
    assert P.shape == (n, 2)
    assert np.all(np.abs(P) <= half + 1e-12)
    assert _min_sep(P) >= 0.5 - 1e-12
    assert np.array_equal(P, cp_positions(n, half, half))


def test_circle_packing_rejects_overfull_region():
    with pytest.raises(PackingError):
        cp_positions(4, 0.2, 0.2)
    assert np.array_equal(cp_positions(1, 0.0, 0.0), np.zeros((1, 2)))


def test_linear_array_spacing_and_width():
    P = ula_positions(4, 1.0)
    assert np.allclose(np.diff(P[:, 0]), 0.5) and np.all(P[:, 1] == 0)
    assert P[:, 0].mean() == pytest.approx(0.0)
    with pytest.raises(PackingError):
        ula_positions(6, 1.0)


def test_initial_layouts_by_mode():
    cfg = ScenarioConfig(model="normalized")
    ula = init_layout(SchemeMode.FPA_ULA, cfg)
    cp = init_layout(SchemeMode.DS_FAS, cfg)
    assert np.allclose(ula.tx[0, :, 1], 0.0)
    assert np.array_equal(cp.tx[0], cp.tx[-1])
    assert np.array_equal(cp.rx, np.zeros((cfg.k, 2)))
    assert cp.tx_half == (1.0, 1.0) and cp.rx_half == (0.5, 0.5)


def test_scheme_parsing():
    assert SchemeMode.parse("DS_FAS") is SchemeMode.DS_FAS
    assert SchemeMode.parse("fpa-cp") is SchemeMode.FPA_CP
    with pytest.raises(ValueError):
        SchemeMode.parse("ss-fas")
    assert SchemeMode.T_FAS.moves_tx and not SchemeMode.T_FAS.moves_rx
    assert SchemeMode.R_FAS.moves_rx and not SchemeMode.R_FAS.moves_tx


def test_sensing_only_all_modes_agree():
    cfg = ScenarioConfig(**SMALL, gamma=0.0)
    ch = generate_scenario(cfg, 3)[1]
    omegas = [run(cfg, m, channels=ch).omega for m in SchemeMode]
    assert max(omegas) - min(omegas) <= 1e-4 * max(omegas)
    res = run(cfg, "ds-fas", channels=ch)
    assert res.trace[0].nu == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("mode", list(SchemeMode))
def test_rho_never_decreases(mode):
    cfg = ScenarioConfig(**SMALL, gamma=2.0)
    res = run(cfg, mode, trial=1, max_iter=6, eps=0.0)
    rho = [r.rho for r in res.trace]
    assert all(b >= a - 1e-6 * abs(a) for a, b in zip(rho, rho[1:]))
    if not (mode.moves_tx or mode.moves_rx):
        assert res.iterations == 1 and res.converged


def test_fixed_modes_keep_positions():
    cfg = ScenarioConfig(**SMALL, gamma=2.0)
    for mode in (SchemeMode.FPA_CP, SchemeMode.FPA_ULA):
        res = run(cfg, mode, trial=2)
        start = init_layout(mode, cfg)
        assert np.array_equal(res.layout.tx, start.tx)
        assert np.array_equal(res.layout.rx, start.rx)
    res = run(cfg, "t-fas", trial=2)
    assert np.array_equal(res.layout.rx, np.zeros((cfg.k, 2)))


def test_runs_are_deterministic():
    cfg = ScenarioConfig(**SMALL, gamma=2.0)
    a, b = run(cfg, "ds-fas", trial=4), run(cfg, "ds-fas", trial=4)
    assert a.omega == b.omega and a.layout.tx.tobytes() == b.layout.tx.tobytes()
    assert [r.rho for r in a.trace] == [r.rho for r in b.trace]


def test_feasible_run_passes_constraint_audit():
    cfg = ScenarioConfig(**SMALL, gamma=1.0)
    res = run(cfg, "ds-fas", trial=0)
    assert res.feasible
    rep = verify_constraints(res)
    assert rep.ok, rep.lines()
    assert set(rep.slacks) == {"C1_sinr", "C2_power", "C3_tx_region", "C4_rx_region",
                               "C5_separation", "C6_psd"}


def test_audit_flags_crowded_transmit_antennas():
    cfg = ScenarioConfig(**SMALL, gamma=1.0)
    res = run(cfg, "fpa-cp", trial=0)
    res.layout.tx[0, 1] = res.layout.tx[0, 0] + np.array([0.25, 0.0])
    rep = verify_constraints(res)
    assert "C5_separation" in rep.violations
    assert rep.slacks["C5_separation"] == pytest.approx(-0.25)


def test_audit_flags_region_and_power():
    cfg = ScenarioConfig(**SMALL, gamma=1.0)
    res = run(cfg, "fpa-cp", trial=0)
    res.layout.rx[0] = [0.75, 0.0]
    res.covs.R = 2.0 * res.covs.R
    rep = verify_constraints(res)
    assert "C4_rx_region" in rep.violations and "C2_power" in rep.violations


def test_unreachable_targets_report_penalty():
    cfg = ScenarioConfig(**SMALL, gamma=1e6)
    res = run(cfg, "fpa-cp", trial=0)
    assert not res.feasible
    assert res.nu > 0
    assert "C1_sinr" in verify_constraints(res).violations
