"""Normal modes of two gravitationally coupled resonators and the revival-gap experiment.

The coupling ``K(b_A b_B† + b_A† b_B)`` with ``K = Gm/(ω_m d³)`` is
diagonalized by ``b± = (b_A ± b_B)/√2``, giving ``ω± = ω_m ± K``.  Hence
``ω_− − ω_+ = −2K`` in this convention; the magnitude of the splitting is
``2K``.

In the off-diagonal block, opposite forces (``λ_A = −λ_B``) separate the
ket and bra along the centre-of-mass coordinate ``x_+`` (configuration b),
equal forces along the breathing coordinate ``x_−`` (configuration a).
The other normal mode only sees a commutator drive, which leaves the block
trace unchanged, so each configuration reduces to one driven mode with
drive ``(λ/√2){F, X}``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import analytic
from .constants import G_NEWTON
from .dynamics import (
    BosonThermal,
    DoubleCommutator,
    Generator,
    IntegratorConfig,
    block_truncation,
    integrate,
)
from .hamiltonians import beam_splitter_matrix
from .hilbert import (
    CompositeSpace,
    DensityOperator,
    Operator,
    PureState,
    annihilation,
    boson,
    embed,
    number,
    position,
    space_of,
    thermal_state,
)


@dataclass(frozen=True)
class GravityScenario:
    omega_m: float
    K: float
    grav_constant: float = 0.0
    m: float = float("nan")
    d: float = float("nan")

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError("omega_m must be positive")
        if self.K < 0 or self.K >= self.omega_m:
            raise ValueError("K must lie in [0, omega_m)")
        if self.grav_constant < 0:
            raise ValueError("grav_constant must be non-negative")

    @classmethod
    def from_coupling(cls, K: float, omega_m: float, grav_constant: float = 0.0) -> "GravityScenario":
        """Scenario with a chosen coupling, for desk-scale studies."""
        return cls(omega_m=omega_m, K=K, grav_constant=grav_constant)

    def with_grav_constant(self, c: float) -> "GravityScenario":
        return replace(self, grav_constant=c)

    @property
    def omega_plus(self) -> float:
        return self.omega_m + self.K

    @property
    def omega_minus(self) -> float:
        return self.omega_m - self.K

    @property
    def Delta_split(self) -> float:
        """``ω_− − ω_+ = −2K``, formed directly so it survives K ≪ ω_m in floating point."""
        return -2 * self.K

    @property
    def Gamma_grav_plus(self) -> float:
        return self.grav_constant / self.omega_plus

    @property
    def Gamma_grav_minus(self) -> float:
        return self.grav_constant / self.omega_minus

    def mode(self, sign: int) -> tuple[float, float]:
        """(frequency, gravitational rate) of the ``+`` or ``−`` mode."""
        if sign > 0:
            return self.omega_plus, self.Gamma_grav_plus
        return self.omega_minus, self.Gamma_grav_minus


def coupling_rate(m: float, d: float, omega_m: float) -> float:
    """``K = G m / (ω_m d³)``."""
    if m <= 0 or d <= 0:
        raise ValueError("mass and separation must be positive")
    return G_NEWTON * m / (omega_m * d**3)


def normal_modes(m: float, d: float, omega_m: float, grav_constant: float = 0.0) -> GravityScenario:
    return GravityScenario(omega_m=omega_m, K=coupling_rate(m, d, omega_m), grav_constant=grav_constant, m=m, d=d)


def default_grav_constant(
    omega_plus: float, lambda_e: float, omega_m: float, gamma_m: float, n_bar: float, fraction: float = 0.1
) -> float:
    """Proportionality constant with ``Γ_+ (4λ/ω_m)² = fraction · γ_m n̄``.

    ``4λ/ω_m`` is the largest separation of ``x_+`` between ket and bra
    during one loop.
    """
    return fraction * gamma_m * n_bar * omega_plus / (4 * lambda_e / omega_m) ** 2


def _mixing_unitary(truncation: int) -> np.ndarray:
    """``exp{(π/4)(b_A b_B† − b_A† b_B)}``: the inverse of the cavity beam splitter."""
    return beam_splitter_matrix(truncation).conj().T


def normal_mode_transform(obj, direction: str = "forward"):
    """Conjugate an operator (or act on a state) with the mode-mixing unitary.

    ``forward`` maps ``X ↦ U X U†`` (states ``ψ ↦ Uψ``); ``inverse`` uses U†.
    With ``U = exp{(π/4)(b_A b_B† − b_A† b_B)}``, ``U b_A U† = (b_A + b_B)/√2``
    and ``U b_B U† = (b_B − b_A)/√2``.  The ``inverse`` direction brings the
    coupled Hamiltonian to normal-mode form with mode 0 carrying ω_+ and
    mode 1 carrying ω_−.
    """
    space = obj.space
    if len(space) != 2 or any(s.kind != "boson" for s in space.subsystems):
        raise ValueError("normal-mode transform acts on two bosonic modes")
    if space.subsystems[0].truncation != space.subsystems[1].truncation:
        raise ValueError("modes must have equal truncation")
    U = _mixing_unitary(space.subsystems[0].truncation)
    if direction == "inverse":
        U = U.conj().T
    elif direction != "forward":
        raise ValueError("direction must be 'forward' or 'inverse'")
    if isinstance(obj, PureState):
        return PureState(space, U @ obj.amplitudes)
    M = U @ obj.dense() @ U.conj().T
    return DensityOperator(space, M) if isinstance(obj, DensityOperator) else Operator(space, M)


def coupled_hamiltonian(scenario: GravityScenario, truncation: int) -> Operator:
    space = space_of(boson(truncation), boson(truncation))
    bA = embed(annihilation(truncation), space, 0)
    bB = embed(annihilation(truncation), space, 1)
    N = embed(number(truncation), space, 0) + embed(number(truncation), space, 1)
    hop = bA @ bB.dag()
    return scenario.omega_m * N + scenario.K * (hop + hop.dag())


def collective_position(space: CompositeSpace, sign: int) -> Operator:
    """``x± = (x_A ± x_B)/√2`` on a two-mode space."""
    xA = embed(position(space.subsystems[0].truncation), space, 0)
    xB = embed(position(space.subsystems[1].truncation), space, 1)
    return (1 / math.sqrt(2)) * (xA + (1 if sign > 0 else -1) * xB)


def gravitational_dissipator(
    Gamma: float, space: CompositeSpace, collective: Optional[int] = None, mode_index: int = 0
) -> DoubleCommutator:
    """``−Γ[x, [x, ρ]]`` on a collective coordinate (``collective=±1``) or one mode."""
    if collective is not None:
        x = collective_position(space, collective)
    else:
        x = embed(position(space.subsystems[space.check_index(mode_index)].truncation), space, mode_index)
    return DoubleCommutator(Gamma, x)


# ---------------------------------------------------------------------------
# Revival-gap experiment


@dataclass(frozen=True)
class GapEnvironment:
    """Environmental parameters shared by both configurations."""

    lambda_e: float
    gamma_m: float = 0.0
    n_bar: float = 0.0
    gamma_q_tilde: float = 0.0
    n_initial: Optional[float] = None  # None: thermal at n̄


def normal_mode_generator(omega: float, drive: float, gamma_m: float, n_bar: float, gamma_x: float, truncation: int):
    """Block generator of one normal mode with the drive ``−i·drive·{F, X}``."""
    space = space_of(boson(truncation))
    N = number(truncation).dense()
    b = annihilation(truncation).dense()
    F = b + b.conj().T
    x = F / math.sqrt(2)
    decay, sandwiches = BosonThermal(gamma_m, n_bar, 0).terms(space)
    decay = decay.toarray()
    A_L = -1j * omega * N + decay - 1j * drive * F - gamma_x * (x @ x)
    A_R = 1j * omega * N + decay - 1j * drive * F - gamma_x * (x @ x)
    sandwiches = [(c, L.toarray(), R.toarray()) for c, L, R in sandwiches]
    if gamma_x:
        sandwiches.append((2 * gamma_x, x, x))
    return Generator(space, A_L, A_R, sandwiches)


def gap_truncation(env: GapEnvironment, omega: float, duration: float, tail: float = 1e-6) -> int:
    """Fock cutoff for one normal mode over ``duration`` (drive ``√2λ`` in one-sided terms)."""
    n0 = env.n_bar if env.n_initial is None else env.n_initial
    return block_truncation(omega, math.sqrt(2) * env.lambda_e, env.gamma_m, env.n_bar, n0, duration, tail)


@dataclass
class GapResult:
    times: np.ndarray
    curve_a: np.ndarray  # breathing-mode configuration, λ_A = λ_B
    curve_b: np.ndarray  # centre-of-mass configuration, λ_A = −λ_B
    analytic_a: np.ndarray
    analytic_b: np.ndarray
    revival_index: np.ndarray
    revival_a: np.ndarray
    revival_b: np.ndarray
    analytic_revival_a: np.ndarray
    analytic_revival_b: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.curve_b - self.curve_a

    @property
    def revival_gap(self) -> np.ndarray:
        return self.revival_b - self.revival_a

    @property
    def analytic_revival_gap(self) -> np.ndarray:
        return self.analytic_revival_b - self.analytic_revival_a


def _single_mode_concurrence(scenario, env, sign, times, truncation, config):
    omega, Gamma = scenario.mode(sign)
    drive = env.lambda_e / math.sqrt(2)
    gen = normal_mode_generator(omega, drive, env.gamma_m, env.n_bar, Gamma, truncation)
    n0 = env.n_bar if env.n_initial is None else env.n_initial
    X0 = 0.5 * thermal_state(n0, truncation).dense()
    mats = integrate(gen, X0, list(times), config, gen.default_dt())
    tr = np.array([np.trace(M) for M in mats])
    return 2 * np.exp(-2 * env.gamma_q_tilde * np.asarray(times)) * np.abs(tr)


def single_mode_analytic(scenario: GravityScenario, env: GapEnvironment, sign: int, times) -> np.ndarray:
    """Closed-form concurrence for one configuration.

    The symmetric drive ``(λ/√2){F, X}`` has the trace of a one-sided drive
    of strength ``√2λ``.
    """
    omega, Gamma = scenario.mode(sign)
    p = analytic.AnalyticParams(
        lambda_e=math.sqrt(2) * env.lambda_e,
        omega_m=omega,
        gamma_m=env.gamma_m,
        n_bar=env.n_bar,
        gamma_q_tilde=env.gamma_q_tilde,
        n_initial=env.n_initial,
        gamma_x=Gamma,
    )
    t = np.asarray(times, dtype=float)
    return np.exp(-2 * env.gamma_q_tilde * t + analytic.log_trace_magnitude(t, p))


def revival_gap_experiment(
    scenario: GravityScenario,
    env: GapEnvironment,
    periods: int = 3,
    samples_per_period: int = 48,
    truncation: Optional[int] = None,
    config: Optional[IntegratorConfig] = None,
) -> GapResult:
    """Concurrence curves for both configurations under identical environments.

    Configuration a drives the breathing mode (ω_−, Γ_−), configuration b
    the centre-of-mass mode (ω_+, Γ_+).  Revival amplitudes are read at each
    configuration's own revival times ``2πn/ω±``.
    """
    config = config or IntegratorConfig()
    T_slow = 2 * math.pi / scenario.omega_minus
    truncation = truncation or gap_truncation(env, scenario.omega_minus, periods * T_slow)
    grid = np.linspace(0, periods * T_slow, periods * samples_per_period + 1)
    n = np.arange(1, periods + 1)
    rev_a = 2 * math.pi * n / scenario.omega_minus
    rev_b = 2 * math.pi * n / scenario.omega_plus
    times = np.unique(np.concatenate([grid, rev_a, rev_b]))

    with ThreadPoolExecutor(max_workers=2) as pool:
        runs = [pool.submit(_single_mode_concurrence, scenario, env, s, times, truncation, config) for s in (-1, 1)]
        curve_a, curve_b = (r.result() for r in runs)
    ana_a = single_mode_analytic(scenario, env, -1, times)
    ana_b = single_mode_analytic(scenario, env, +1, times)
    idx_a = np.searchsorted(times, rev_a)
    idx_b = np.searchsorted(times, rev_b)
    return GapResult(
        times=times,
        curve_a=curve_a,
        curve_b=curve_b,
        analytic_a=ana_a,
        analytic_b=ana_b,
        revival_index=n,
        revival_a=curve_a[idx_a],
        revival_b=curve_b[idx_b],
        analytic_revival_a=ana_a[idx_a],
        analytic_revival_b=ana_b[idx_b],
    )
