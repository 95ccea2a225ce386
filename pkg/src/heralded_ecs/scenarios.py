"""Scenario dispatch: turn a :class:`RunConfig` into curves, scalars and files."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import analytic, gravity, protocol
from .config import RunConfig
from .dynamics import BlockParams, IntegratorConfig, block_truncation, evolve_block_factorized
from .export import SUMMARY_SCHEMA, column, write_series, write_summary
from .hamiltonians import DetectorParams, SiteParams, TransmonParams, transmon_levels
from .hilbert import thermal_state


class NumericalFailure(RuntimeError):
    """A numerical stage failed; the message names the scenario and stage."""


@dataclass
class RunReport:
    scenario: str
    resolved: dict
    headline: dict
    series: dict = field(default_factory=dict)  # name → file name inside the output dir
    schema: str = SUMMARY_SCHEMA

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "resolved": self.resolved,
            "headline": self.headline,
            "series": self.series,
            "version": __version__,
        }


@dataclass
class _Outcome:
    headline: dict
    series: dict  # name → (columns, meta)


def integrator_config(cfg: RunConfig) -> IntegratorConfig:
    n = cfg.numerics
    return IntegratorConfig(method=n.method, dt=n.dt, tolerance=n.tolerance)


def protocol_config(cfg: RunConfig, mode: str) -> protocol.ProtocolConfig:
    m, t, c, d, p = cfg.mechanics, cfg.transmon, cfg.cavity, cfg.detector, cfg.protocol
    site = SiteParams(omega_c=c.omega_c, omega_m=m.omega_m, lambda_g=m.lambda_g, lambda_e=m.lambda_e, chi=t.chi)
    det = DetectorParams(omega_c=c.omega_c, chi_p=cfg.chi_p, Delta=d.Delta)
    noisy = mode == "open" and p.noise
    rates = protocol.NoiseRates(
        gamma_q_tilde=t.gamma_q_tilde if noisy else 0.0,
        gamma_q=t.gamma_q if noisy else 0.0,
        gamma_m=m.gamma_m if noisy else 0.0,
        n_bar=m.n_bar if noisy else 0.0,
        kappa_s=c.kappa_s,
        kappa_p=d.kappa_p if noisy else 0.0,
        efficiency=d.efficiency,
    )
    return protocol.ProtocolConfig(
        site=site,
        detector=det,
        n_pulses=p.n_pulses,
        mode=mode,
        rates=rates,
        mech_truncation=cfg.numerics.mech_truncation,
        cavity_truncation=c.truncation,
        force_orientation=p.force_orientation,
        interaction_time=p.interaction_time,
        recenter=p.recenter,
        transfer=p.transfer,
        detector_noise=d.noise and mode == "open",
        integrator=integrator_config(cfg),
    )


def _protocol(cfg: RunConfig, mode: str) -> _Outcome:
    pc = protocol_config(cfg, mode)
    res = protocol.run(pc)
    alpha = protocol.target_alpha(pc, "A")
    p_plus, p_minus = analytic.success_probabilities(alpha)
    nan = float("nan")
    rows = {k: [] for k in ("branch", "probability", "leakage", "p_plus", "p_minus",
                            "heralded_fidelity", "heralded_concurrence", "fidelity_plus", "fidelity_minus")}
    branches = {}
    for i, r in enumerate(res.records):
        single = r.herald_sign is not None and r.probability > 1e-12
        ps = r.postselection
        vals = {
            "branch": i,
            "probability": r.probability,
            "leakage": r.leakage,
            "p_plus": r.p_plus if r.p_plus is not None else nan,
            "p_minus": r.p_minus if r.p_minus is not None else nan,
            "heralded_fidelity": protocol.heralded_fidelity(r, pc) if single else nan,
            "heralded_concurrence": protocol.heralded_concurrence(r) if single else nan,
            "fidelity_plus": ps[+1].fidelity if +1 in ps else nan,
            "fidelity_minus": ps[-1].fidelity if -1 in ps else nan,
        }
        for k, v in vals.items():
            rows[k].append(v)
        branches[r.label] = {k: v for k, v in vals.items() if k != "branch"}
    headline = {
        "alpha": abs(alpha),
        "mech_truncation": pc.mech_cutoff(),
        "success_probability": res.success_probability,
        "p_plus_formula": p_plus,
        "p_minus_formula": p_minus,
        "branches": branches,
        "hygiene": res.hygiene,
    }
    if cfg.run.sampling_shots > 0:
        headline["sampled_counts"] = protocol.sample_branches(res, cfg.run.sampling_shots, cfg.run.seed)
    units = {"branch": "index", "probability": "1", "leakage": "1"}
    cols = [column(k, units.get(k, "1"), v) for k, v in rows.items()]
    meta = {"branches": ",".join(r.label for r in res.records)}
    return _Outcome(headline, {"branches": (cols, meta)})


def _block_curves(cfg: RunConfig, with_analytic: bool) -> _Outcome:
    m, s, t = cfg.mechanics, cfg.scan, cfg.transmon
    w = m.omega_m
    n_bar = m.n_bar if s.n_bar is None else s.n_bar
    n0 = n_bar if m.n_initial is None else m.n_initial
    period = 2 * math.pi / w
    duration = s.periods * period
    samples = int(round(s.periods * s.samples_per_period))
    times = np.linspace(0.0, duration, samples + 1)
    lambdas = s.lambda_e_values or (m.lambda_e,)
    integ = integrator_config(cfg)

    cols = [column("t", "s", times)]
    headline = {"n_bar": n_bar, "n_initial": n0, "curves": []}
    worst = 0.0
    revival_idx = [k * s.samples_per_period for k in range(1, int(s.periods) + 1)]
    for j, lam in enumerate(lambdas):
        trunc = cfg.numerics.mech_truncation or block_truncation(w, lam, m.gamma_m, n_bar, n0, duration, cfg.numerics.tail)
        bp = BlockParams(w, lam, lam, m.gamma_m, n_bar, t.gamma_q_tilde)
        rho0 = thermal_state(n0, trunc).dense()
        fb = evolve_block_factorized(bp, rho0, rho0, list(times), integ)
        numeric = np.abs(fb.traces())
        tag = f"lambda{j}"
        cols.append(column(f"C_{tag}", "1", numeric))
        entry = {
            "lambda_e": lam,
            "lambda_over_omega": lam / w,
            "truncation": trunc,
            "min": float(numeric.min()),
            "revivals": [float(numeric[i]) for i in revival_idx if i < len(numeric)],
        }
        if with_analytic:
            ap = analytic.AnalyticParams(lam, w, m.gamma_m, n_bar, t.gamma_q_tilde, n_initial=n0)
            ana = analytic.concurrence_analytic(times, ap)
            dev = np.abs(numeric - ana)
            cols += [column(f"C_analytic_{tag}", "1", ana), column(f"deviation_{tag}", "1", dev)]
            entry["max_deviation"] = float(dev.max())
            worst = max(worst, float(dev.max()))
        headline["curves"].append(entry)
    if with_analytic:
        headline["max_deviation"] = worst
    return _Outcome(headline, {"curves": (cols, {"lambda_e_rad_per_s": ",".join(repr(x) for x in lambdas)})})


def gravity_setup(cfg: RunConfig) -> tuple[gravity.GravityScenario, gravity.GapEnvironment]:
    m, g = cfg.mechanics, cfg.gravity
    w = m.omega_m
    if g.coupling is not None:
        sc = gravity.GravityScenario.from_coupling(g.coupling, w)
    else:
        sc = gravity.normal_modes(m.mass, g.separation, w)
    n_bar = m.n_bar if g.n_bar is None else g.n_bar
    if not g.enabled:
        c = 0.0
    elif g.grav_constant is not None:
        c = g.grav_constant
    else:
        c = gravity.default_grav_constant(sc.omega_plus, m.lambda_e, w, m.gamma_m, n_bar, g.grav_fraction)
    env = gravity.GapEnvironment(m.lambda_e, m.gamma_m, n_bar, cfg.transmon.gamma_q_tilde, n_initial=m.n_initial)
    return sc.with_grav_constant(c), env


def _gravity(cfg: RunConfig) -> _Outcome:
    sc, env = gravity_setup(cfg)
    g = cfg.gravity
    r = gravity.revival_gap_experiment(
        sc, env, periods=g.periods, samples_per_period=g.samples_per_period,
        truncation=cfg.numerics.mech_truncation, config=integrator_config(cfg),
    )
    ana_gap = r.analytic_b - r.analytic_a
    curves = [
        column("t", "s", r.times),
        column("C_a", "1", r.curve_a),
        column("C_b", "1", r.curve_b),
        column("gap", "1", r.gap),
        column("C_a_analytic", "1", r.analytic_a),
        column("C_b_analytic", "1", r.analytic_b),
        column("gap_analytic", "1", ana_gap),
    ]
    rev_a = 2 * math.pi * r.revival_index / sc.omega_minus
    rev_b = 2 * math.pi * r.revival_index / sc.omega_plus
    revivals = [
        column("n", "1", r.revival_index),
        column("t_a", "s", rev_a),
        column("t_b", "s", rev_b),
        column("revival_a", "1", r.revival_a),
        column("revival_b", "1", r.revival_b),
        column("revival_gap", "1", r.revival_gap),
        column("revival_gap_analytic", "1", r.analytic_revival_gap),
    ]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(r.revival_gap - r.analytic_revival_gap) / np.abs(r.analytic_revival_gap)
    headline = {
        "K": sc.K,
        "Delta_split": sc.Delta_split,
        "omega_plus": sc.omega_plus,
        "omega_minus": sc.omega_minus,
        "grav_constant": sc.grav_constant,
        "Gamma_grav_plus": sc.Gamma_grav_plus,
        "Gamma_grav_minus": sc.Gamma_grav_minus,
        "max_abs_gap": float(np.max(np.abs(r.gap))),
        "revival_gap": r.revival_gap.tolist(),
        "revival_gap_analytic": r.analytic_revival_gap.tolist(),
        "revival_gap_relative_error": rel.tolist(),
    }
    return _Outcome(headline, {"curves": (curves, {}), "revivals": (revivals, {})})


def transmon_spectrum_rows(cfg: RunConfig) -> dict:
    t, s = cfg.transmon, cfg.spectrum
    E_C = t.E_C
    rows = {k: [] for k in ("ratio", "E_J", "omega_ge", "asymptotic", "rel_error", "anharmonicity", "anh_rel_error", "convergence")}
    for E_J in np.linspace(s.E_J_min, s.E_J_max, s.steps):
        lv = transmon_levels(TransmonParams(E_J=float(E_J), E_C=E_C, eta=t.eta, charge_cutoff=t.charge_cutoff))
        Om = lv["Omega"]
        ge = Om[1] - Om[0]
        anh = (Om[2] - Om[1]) - ge
        asym = math.sqrt(8 * E_J * E_C) - E_C
        rows["ratio"].append(E_J / E_C)
        rows["E_J"].append(E_J / (2 * math.pi))
        rows["omega_ge"].append(ge / (2 * math.pi))
        rows["asymptotic"].append(asym / (2 * math.pi))
        rows["rel_error"].append(abs(ge - asym) / asym)
        rows["anharmonicity"].append(anh / (2 * math.pi))
        rows["anh_rel_error"].append(abs(anh + E_C) / E_C)
        rows["convergence"].append(lv["convergence_shift"])
    return rows


def _spectrum(cfg: RunConfig) -> _Outcome:
    rows = transmon_spectrum_rows(cfg)
    units = {"ratio": "1", "E_J": "Hz", "omega_ge": "Hz", "asymptotic": "Hz", "anharmonicity": "Hz"}
    cols = [column(k, units.get(k, "1"), v) for k, v in rows.items()]
    headline = {
        "max_rel_error": max(rows["rel_error"]),
        "max_anh_rel_error": max(rows["anh_rel_error"]),
        "max_convergence_shift": max(rows["convergence"]),
    }
    return _Outcome(headline, {"levels": (cols, {})})


_DISPATCH = {
    "ideal-protocol": lambda c: _protocol(c, "ideal"),
    "open-protocol": lambda c: _protocol(c, "open"),
    "concurrence-scan": lambda c: _block_curves(c, with_analytic=False),
    "analytic-compare": lambda c: _block_curves(c, with_analytic=True),
    "gravity-gap": _gravity,
    "transmon-spectrum": _spectrum,
}


def run_scenario(cfg: RunConfig, out_dir: Optional[Path] = None) -> RunReport:
    """Run the configured scenario; write series and ``summary.json`` when ``out_dir`` is given."""
    name = cfg.scenario
    try:
        outcome = _DISPATCH[name](cfg)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(f"{name}: {type(exc).__name__}: {exc}") from exc
    report = RunReport(name, cfg.resolved(), outcome.headline)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for key, (cols, meta) in outcome.series.items():
            fname = f"{name}-{key}.tsv"
            write_series(out_dir / fname, cols, {"scenario": name, **meta})
            report.series[key] = fname
        write_summary(out_dir / "summary.json", report.to_dict())
    return report
