import math
from dataclasses import replace

import numpy as np
import pytest

from heralded_ecs import analytic as an
from heralded_ecs import entanglement as en
from heralded_ecs import protocol as pr
from heralded_ecs.hamiltonians import DetectorParams, SiteParams

TWO_PI = 2 * math.pi
W = TWO_PI * 1e6
LAM = TWO_PI * 5e4
DET = DetectorParams(omega_c=TWO_PI * 11e9, chi_p=math.sqrt(4 * math.pi * TWO_PI * 1e9 * TWO_PI * 2e5), Delta=TWO_PI * 1e9)
SITE = SiteParams(omega_m=W, lambda_e=LAM, chi=TWO_PI * 45e6)


def config(**kw):
    return pr.ProtocolConfig(site=SITE, detector=DET, **kw)


@pytest.fixture(scope="module")
def ideal():
    cfg = config()
    return cfg, pr.run(cfg)


def test_branch_probabilities(ideal):
    _, res = ideal
    p = {r.label: r.probability for r in res.records}
    assert abs(p["D1"] - 0.25) < 1e-9 and abs(p["D2"] - 0.25) < 1e-9
    assert abs(p["none"] - 0.5) < 1e-9 and p["both"] < 1e-12
    assert abs(res.success_probability - 0.5) < 1e-9


def test_heralded_state_and_concurrence(ideal):
    cfg, res = ideal
    alpha = abs(pr.target_alpha(cfg, "A"))
    assert abs(alpha - 0.05) < 1e-12
    for label in ("D1", "D2"):
        r = res.record(label)
        assert pr.heralded_fidelity(r, cfg) > 1 - 1e-9
        # qubits entangled with displaced mechanics: C = |⟨α|−α⟩|² = e^{−4|α|²}
        assert abs(pr.heralded_concurrence(r) - math.exp(-4 * alpha**2)) < 1e-9


@pytest.mark.parametrize("n_pulses", [0, 9])
def test_postselection_probabilities(n_pulses):
    cfg = config(n_pulses=n_pulses)
    res = pr.run(cfg)
    pp, pm = an.success_probabilities(pr.target_alpha(cfg, "A"))
    for label in ("D1", "D2"):
        r = res.record(label)
        assert abs(r.p_plus - pp) < 1e-9 and abs(r.p_minus - pm) < 1e-9
        for sign in (1, -1):
            assert r.postselection[sign].fidelity > 1 - 1e-8


def test_pulse_amplification_reaches_alpha():
    cfg = config(n_pulses=9)
    assert abs(abs(pr.target_alpha(cfg, "A")) - 0.5) < 1e-12
    assert cfg.nominal_alpha() == pytest.approx(0.5)


def test_full_loop_revives_qubit_entanglement():
    cfg = config(interaction_time=2 * math.pi / W)
    res = pr.run(cfg)
    # square roots in the Wootters formula lift ~1e-17 eigenvalue noise to ~1e-9
    assert abs(pr.heralded_concurrence(res.record("D1")) - 1) < 1e-7


def test_reverted_orientation_targets():
    cfg = config(force_orientation="reverted", n_pulses=9)
    res = pr.run(cfg)
    r = res.record("D1")
    assert pr.heralded_fidelity(r, cfg) > 1 - 1e-9
    assert r.postselection[1].fidelity > 1 - 1e-8


def test_phase_table_is_recorded(ideal):
    _, res = ideal
    assert set(res.phase_table) == {"displace_A", "displace_B", "emit"}
    assert all(math.isfinite(x) for stage in res.phase_table.values() for x in stage.values())
    assert res.phase_table["emit"]["e"] == pytest.approx(math.pi / 2)


def test_config_validation():
    with pytest.raises(ValueError):
        config(alpha=0.3)
    with pytest.raises(ValueError):
        config(n_pulses=2, interaction_time=1e-6)
    with pytest.raises(ValueError):
        config(mode="quantum")
    with pytest.raises(ValueError):
        pr.NoiseRates(gamma_m=-1.0)
    cfg = pr.ProtocolConfig.from_alpha(0.5, SITE, DET, n_pulses=4)
    assert cfg.site.lambda_e == pytest.approx(0.1 * W)


def test_sampling_is_seeded(ideal):
    _, res = ideal
    a = pr.sample_branches(res, 1000, seed=7)
    assert a == pr.sample_branches(res, 1000, seed=7)
    assert sum(a.values()) == 1000 and a["both"] == 0


def test_open_mode_without_noise_matches_ideal(ideal):
    cfg, ref = ideal
    res = pr.run(replace(cfg, mode="open"))
    for label in ("none", "D1", "D2"):
        assert abs(res.record(label).probability - ref.record(label).probability) < 1e-9
    r = res.record("D1")
    assert pr.heralded_fidelity(r, cfg) > 1 - 1e-8
    assert abs(r.p_plus - ref.record("D1").p_plus) < 1e-8
    w = res.hygiene
    assert w["trace_drift"] < 1e-7 and w["hermiticity"] < 1e-8 and w["min_eigenvalue"] > -1e-6


def test_open_mode_table_one_noise_matches_analytic():
    n_bar = an.bose_einstein(W, 0.025)
    rates = pr.NoiseRates(gamma_q_tilde=TWO_PI * 2e4, gamma_q=TWO_PI * 5e3, gamma_m=W / 1e5, n_bar=n_bar)
    tau = 2 * math.pi / W
    cfg = config(mode="open", rates=rates, interaction_time=tau)
    res = pr.run(cfg)
    C = pr.heralded_concurrence(res.record("D1"))
    ap = an.AnalyticParams(LAM, W, rates.gamma_m, n_bar, rates.gamma_q_tilde, n_initial=0.0, gamma_q=rates.gamma_q)
    assert abs(C - an.heralded_concurrence_analytic(tau, ap)) < 5e-3
    assert res.hygiene["min_eigenvalue"] > -1e-6


def test_parity_gate_matrix_signs():
    M = pr.parity_gate_matrix(2)
    assert np.allclose(np.diagonal(M), [1, 1, 1, 1, -1, 1])
