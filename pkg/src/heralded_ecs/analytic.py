"""Closed-form predictions for the two-site off-diagonal block.

One driven, damped mode with a one-sided force ``−iλ(b+b†)·X`` has

    ln|Tr X(t)| = −(n₀+½)|β(t)|² − (n̄+½)γ∫₀ᵗ|β|² − 2Γ_x∫₀ᵗ(Re β)²,
    β(τ) = (λ/Ω)(1 − e^{iΩτ}),   Ω = ω_m + iγ/2,

where n₀ is the initial thermal occupation and Γ_x an optional
``−Γ_x[x,[x,·]]`` dephasing.  With n₀ = n̄ and Γ_x = 0 this is
``exp(−(n̄+½)ζ)`` with ``ζ = |β|² + γ∫|β|²``.  The expansion of that ζ
to first order in γ/ω_m is the displayed approximation ``zeta``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import HBAR, K_B


@dataclass(frozen=True)
class AnalyticParams:
    lambda_e: float
    omega_m: float
    gamma_m: float = 0.0
    n_bar: float = 0.0
    gamma_q_tilde: float = 0.0
    n_initial: Optional[float] = None  # None: start in the bath's thermal state
    gamma_q: float = 0.0  # optional qubit relaxation, adds e^{−γ_q t} to the concurrence
    gamma_x: float = 0.0  # optional −Γ[x,[x,·]] on the driven mode, x = (b+b†)/√2

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError("omega_m must be positive")
        for name in ("gamma_m", "n_bar", "gamma_q_tilde", "gamma_q", "gamma_x"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gamma_m / self.omega_m > 0.1:
            warnings.warn("gamma_m/omega_m > 0.1: weak-damping approximations degrade", stacklevel=2)

    @property
    def Omega(self) -> complex:
        return complex(self.omega_m, self.gamma_m / 2)

    @property
    def n0(self) -> float:
        return self.n_bar if self.n_initial is None else self.n_initial


@dataclass(frozen=True)
class AnalyticCurve:
    times: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or (t.size > 1 and np.any(np.diff(t) <= 0)):
            raise ValueError("times must be strictly increasing")
        if self.kind not in ("concurrence", "characteristic", "zeta", "displacement"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", np.asarray(self.values))


def displacement_trajectory(t, params: AnalyticParams):
    """``α_e(t) = (λ_e/ω_m)(e^{−iω_m t} − 1)``."""
    t = np.asarray(t, dtype=float)
    return params.lambda_e / params.omega_m * (np.exp(-1j * params.omega_m * t) - 1)


def zeta(t, params: AnalyticParams):
    """``(2λ²/ω²)[(1 − cos(ωt)e^{−γt/2}) + γt/2]``."""
    t = np.asarray(t, dtype=float)
    lam, w, g = params.lambda_e, params.omega_m, params.gamma_m
    return 2 * lam**2 / w**2 * ((1 - np.cos(w * t) * np.exp(-g * t / 2)) + g * t / 2)


def _beta(t, p: AnalyticParams):
    W = p.Omega
    return p.lambda_e / W * (1 - np.exp(1j * W * t))


def _int_exp(s, t):
    """∫₀ᵗ e^{sτ} dτ for complex s, elementwise."""
    s = complex(s)
    if abs(s) * np.max(np.abs(t), initial=0) < 1e-8:
        return t + s * t**2 / 2
    return np.expm1(s * t) / s


def _int_abs_beta2(t, p: AnalyticParams):
    # |1 − e^{iΩτ}|² = 1 − 2 Re e^{iΩτ} + e^{−γτ}
    c2 = abs(p.lambda_e / p.Omega) ** 2
    W = p.Omega
    return c2 * (t - 2 * np.real(_int_exp(1j * W, t)) + np.real(_int_exp(-p.gamma_m, t)))


def _int_re_beta2(t, p: AnalyticParams):
    c = p.lambda_e / p.Omega
    W = p.Omega
    int_beta_sq = c**2 * (t - 2 * _int_exp(1j * W, t) + _int_exp(2j * W, t))
    return 0.5 * (np.real(int_beta_sq) + _int_abs_beta2(t, p))


def zeta_exact(t, params: AnalyticParams):
    """``|β(t)|² + γ∫₀ᵗ|β(τ)|²dτ`` in closed form."""
    t = np.asarray(t, dtype=float)
    return np.abs(_beta(t, params)) ** 2 + params.gamma_m * _int_abs_beta2(t, params)


def log_trace_magnitude(t, params: AnalyticParams):
    """``ln|Tr X(t)|`` for one driven mode (see module docstring)."""
    t = np.asarray(t, dtype=float)
    p = params
    return (
        -(p.n0 + 0.5) * np.abs(_beta(t, p)) ** 2
        - (p.n_bar + 0.5) * p.gamma_m * _int_abs_beta2(t, p)
        - 2 * p.gamma_x * _int_re_beta2(t, p)
    )


def phase(t, params: AnalyticParams):
    """``φ(t)`` from ``φ̇ = −λ(κ+κ*)``, ``κ̇ = −iΩ*κ − iλ/2``, ``κ(0) = φ(0) = 0``.

    The damped rate enters conjugated, ``Ω* = ω_m − iγ/2``.
    """
    t = np.asarray(t, dtype=float)
    Wc = params.Omega.conjugate()
    lam = params.lambda_e
    # κ = −(λ/2Ω*)(1 − e^{−iΩ*t})
    int_kappa = -(lam / (2 * Wc)) * (t - _int_exp(-1j * Wc, t))
    return -2 * lam * np.real(int_kappa)


def characteristic_offdiagonal(t, params: AnalyticParams):
    """``χ_ge(0, t) = exp(ln|Tr| + iφ)`` for one mode."""
    return np.exp(log_trace_magnitude(t, params) + 1j * phase(t, params))


def concurrence_analytic(t, params: AnalyticParams, method: str = "closed"):
    """``e^{−2γ̃t}·e^{−2(n̄+½)ζ(t)}`` for two identical sites.

    ``method="closed"`` uses the closed-form trace (exact under the model);
    ``method="approx"`` uses the first-order ζ of :func:`zeta` and applies
    only when the initial occupation equals n̄ and ``gamma_x = 0``.
    """
    t = np.asarray(t, dtype=float)
    p = params
    env = np.exp(-2 * p.gamma_q_tilde * t - p.gamma_q * t)
    if method == "closed":
        return env * np.exp(2 * log_trace_magnitude(t, p))
    if method == "approx":
        return env * np.exp(-2 * (p.n_bar + 0.5) * zeta(t, p))
    raise ValueError("method must be 'closed' or 'approx'")


def heralded_concurrence_analytic(t, params: AnalyticParams):
    """Concurrence of the heralded qubit pair after a step-2 window of length ``t``.

    Relaxation during the window moves population from e to g; branches
    where a qubit relaxed still herald one photon from the other site, so
    the relaxation factor is ``1/(2 − e^{−γ_q t})`` rather than ``e^{−γ_q t}``.
    """
    t = np.asarray(t, dtype=float)
    p = params
    return (
        np.exp(-2 * p.gamma_q_tilde * t + 2 * log_trace_magnitude(t, p))
        / (2 - np.exp(-p.gamma_q * t))
    )


def bose_einstein(omega: float, temperature: float) -> float:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return 1.0 / math.expm1(HBAR * omega / (K_B * temperature))


@dataclass(frozen=True)
class DecoherenceRates:
    n_bar: float
    gamma_m: float
    Gamma_th: float
    Gamma_th_high_T: float
    Gamma_dec: float


def decoherence_rates(omega_m: float, temperature: float, Q_m: float) -> DecoherenceRates:
    """Thermal rates ``Γ_th = γ_m n̄`` and ``Γ_dec = (2n̄+1)γ_m`` with ``γ_m = ω_m/Q_m``."""
    if Q_m <= 0:
        raise ValueError("Q_m must be positive")
    n = bose_einstein(omega_m, temperature)
    g = omega_m / Q_m
    return DecoherenceRates(
        n_bar=n,
        gamma_m=g,
        Gamma_th=g * n,
        Gamma_th_high_T=K_B * temperature / (HBAR * Q_m),
        Gamma_dec=(2 * n + 1) * g,
    )


def success_probabilities(alpha: complex) -> tuple[float, float]:
    """``p± = ½(1 ± e^{−4|α|²})``."""
    x = math.exp(-4 * abs(alpha) ** 2)
    return 0.5 * (1 + x), 0.5 * (1 - x)


def curve(kind: str, times, params: AnalyticParams) -> AnalyticCurve:
    fn = {
        "concurrence": concurrence_analytic,
        "characteristic": characteristic_offdiagonal,
        "zeta": zeta_exact,
        "displacement": displacement_trajectory,
    }[kind]
    return AnalyticCurve(np.asarray(times, dtype=float), fn(times, params), kind)
