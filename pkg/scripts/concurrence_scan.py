#!/usr/bin/env python3
"""Concurrence collapse and revival for several force strengths, numeric against closed form.

Example: python scripts/concurrence_scan.py --lambdas 0.05 0.3 --n-bar 5 --periods 3
"""
import argparse
import math

import numpy as np

from heralded_ecs import analytic, dynamics, hilbert
from heralded_ecs.config import default_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.05, 0.3], help="λ_e/ω_m values")
    ap.add_argument("--n-bar", type=float, default=5.0, help="bath occupation (thermal start)")
    ap.add_argument("--periods", type=int, default=2)
    ap.add_argument("--samples", type=int, default=16, help="samples per period")
    args = ap.parse_args(argv)

    cfg = default_config()
    w, gamma_m, gq = cfg.mechanics.omega_m, cfg.mechanics.gamma_m, cfg.transmon.gamma_q_tilde
    duration = args.periods * 2 * math.pi / w
    times = np.linspace(0, duration, args.periods * args.samples + 1)
    for ratio in args.lambdas:
        lam = ratio * w
        trunc = dynamics.block_truncation(w, lam, gamma_m, args.n_bar, args.n_bar, duration)
        rho0 = hilbert.thermal_state(args.n_bar, trunc).dense()
        block = dynamics.BlockParams(w, lam, lam, gamma_m, args.n_bar, gq)
        numeric = np.abs(dynamics.evolve_block_factorized(block, rho0, rho0, list(times)).traces())
        closed = analytic.concurrence_analytic(times, analytic.AnalyticParams(lam, w, gamma_m, args.n_bar, gq))
        print(f"# lambda/omega = {ratio}  truncation = {trunc}")
        print("t*omega/2pi\tnumeric\tclosed form")
        for t, c, a in zip(times, numeric, closed):
            print(f"{t * w / (2 * math.pi):.4f}\t{c:.6f}\t{a:.6f}")


if __name__ == "__main__":
    main()
