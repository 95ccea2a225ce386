"""Lindblad right-hand sides and time integration.

Every generator is compiled to the form

    dX/dt = A_L X + X A_R + Σ_k L_k X R_k

with sparse ``A_L``, ``A_R``, ``L_k``, ``R_k``.  For a density matrix
``A_R = A_L†`` and the sandwich terms come in adjoint pairs; the
off-diagonal qubit blocks use independent left and right generators.
The superoperator itself is never built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .hilbert import (
    CompositeSpace,
    DensityOperator,
    Operator,
    annihilation,
    embed,
    identity,
    number,
    projector,
    space_of,
    boson,
    thermal_cutoff,
    transition,
)


class IntegrationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Dissipators


def _check_rate(name, value):
    if value < 0 or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite non-negative number")


@dataclass(frozen=True)
class QubitDephasing:
    """``(rate/2)(Σ_k P_k ρ P_k − ρ)`` over the level projectors of one subsystem.

    A coherence between two levels decays at ``rate/2``.
    """

    rate: float
    index: int
    levels: Optional[int] = None

    def __post_init__(self):
        _check_rate("rate", self.rate)

    def terms(self, space):
        spec = space.subsystems[space.check_index(self.index)]
        n = spec.dim if self.levels is None else self.levels
        if n > spec.dim:
            raise ValueError("dephasing level count exceeds subsystem dimension")
        A = (-self.rate / 4) * identity(space).matrix
        sandwiches = []
        for k in range(n):
            P = embed(projector(spec, k), space, self.index).matrix
            sandwiches.append((self.rate / 2, P, P))
        if n < spec.dim:
            # remaining levels act as one block, keeping their mutual coherences
            Q = sum(embed(projector(spec, k), space, self.index).matrix for k in range(n, spec.dim))
            sandwiches.append((self.rate / 2, Q, Q))
        return A, sandwiches


@dataclass(frozen=True)
class TransmonRelaxation:
    """``(γ/2) Σ_{j<k} (2|j⟩⟨k|ρ|k⟩⟨j| − {|k⟩⟨k|, ρ})`` with one rate for every downward pair."""

    rate: float
    index: int

    def __post_init__(self):
        _check_rate("rate", self.rate)

    def terms(self, space):
        spec = space.subsystems[space.check_index(self.index)]
        d = spec.dim
        A = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
        sandwiches = []
        for k in range(d):
            for j in range(k):
                s = embed(transition(spec, j, k), space, self.index).matrix
                sandwiches.append((self.rate, s, s.conj().T))
                A = A - (self.rate / 2) * embed(projector(spec, k), space, self.index).matrix
        return A, sandwiches


@dataclass(frozen=True)
class BosonThermal:
    """``γ(n̄+1) D[b] + γ n̄ D[b†]`` with ``D[c]ρ = cρc† − ½{c†c, ρ}``."""

    rate: float
    n_bar: float
    index: int

    def __post_init__(self):
        _check_rate("rate", self.rate)
        _check_rate("n_bar", self.n_bar)

    def jump_operators(self, space):
        spec = space.subsystems[space.check_index(self.index)]
        if spec.kind != "boson":
            raise ValueError("thermal dissipator needs a bosonic subsystem")
        b = embed(annihilation(spec.truncation), space, self.index).matrix
        ops = [math.sqrt(self.rate * (self.n_bar + 1)) * b]
        if self.n_bar > 0:
            ops.append(math.sqrt(self.rate * self.n_bar) * b.conj().T.tocsr())
        return ops

    def terms(self, space):
        A = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
        sandwiches = []
        for c in self.jump_operators(space):
            cd = c.conj().T.tocsr()
            A = A - 0.5 * (cd @ c)
            sandwiches.append((1.0, c, cd))
        return A, sandwiches


@dataclass(frozen=True)
class Cascaded:
    """Site cavities A, B feeding detector cavities through a 50:50 mixer.

    ``(κ_s/2)(L_A + L_B) + Σ_D (κ_p/2) L_D − √(εκ_sκ_p) Σ_D ([a_D†, m_D ρ] + [ρ m_D†, a_D])``
    with ``L_o ρ = 2oρo† − o†oρ − ρo†o`` and ``m_D = (a_A ± a_B)/√2`` for each
    ``(index, sign)`` in ``targets``.
    """

    kappa_s: float
    kappa_p: float
    efficiency: float
    source_a: int
    source_b: int
    targets: tuple = ((2, +1),)

    def __post_init__(self):
        _check_rate("kappa_s", self.kappa_s)
        _check_rate("kappa_p", self.kappa_p)
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        object.__setattr__(self, "targets", tuple((int(i), int(s)) for i, s in self.targets))
        for _, s in self.targets:
            if s not in (1, -1):
                raise ValueError("mix sign must be +1 or -1")

    def terms(self, space):
        def mode(i):
            spec = space.subsystems[space.check_index(i)]
            if spec.kind != "boson":
                raise ValueError("cascaded coupling needs bosonic subsystems")
            return embed(annihilation(spec.truncation), space, i).matrix

        aA, aB = mode(self.source_a), mode(self.source_b)
        A = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
        sandwiches = []
        for a, k in ((aA, self.kappa_s), (aB, self.kappa_s)):
            ad = a.conj().T.tocsr()
            A = A - (k / 2) * (ad @ a)
            sandwiches.append((k, a, ad))
        cross = math.sqrt(self.efficiency * self.kappa_s * self.kappa_p)
        for idx, sign in self.targets:
            aD = mode(idx)
            aDd = aD.conj().T.tocsr()
            m = (aA + sign * aB) / math.sqrt(2)
            md = m.conj().T.tocsr()
            A = A - (self.kappa_p / 2) * (aDd @ aD)
            sandwiches.append((self.kappa_p, aD, aDd))
            if cross:
                A = A - cross * (aDd @ m)
                sandwiches.append((cross, m, aDd))
                sandwiches.append((cross, aD, md))
        return A, sandwiches


@dataclass(frozen=True)
class DoubleCommutator:
    """``−Γ [x, [x, ρ]]`` for a Hermitian coordinate ``x`` on the full space."""

    rate: float
    coordinate: Operator

    def __post_init__(self):
        _check_rate("rate", self.rate)

    def terms(self, space):
        if self.coordinate.space != space:
            raise ValueError("coordinate lives on a different space")
        x = self.coordinate.sparse()
        return -self.rate * (x @ x), [(2 * self.rate, x, x)]


DissipatorSpec = Union[QubitDephasing, TransmonRelaxation, BosonThermal, Cascaded, DoubleCommutator]


@dataclass(frozen=True)
class LiouvillianSpec:
    hamiltonian: Operator
    dissipators: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "dissipators", tuple(self.dissipators))

    @property
    def space(self) -> CompositeSpace:
        return self.hamiltonian.space


# ---------------------------------------------------------------------------
# Compiled generators


DENSE_MAX_DIM = 96


class Generator:
    """``X ↦ A_L X + X A_R + Σ c L X R`` with sparse factors."""

    def __init__(self, space, A_left, A_right, sandwiches=()):
        self.space = space
        self.A_left = sp.csr_matrix(A_left, dtype=complex)
        self.A_right_T = sp.csr_matrix(A_right, dtype=complex).T.tocsr()
        self.sandwiches = [
            (complex(c), sp.csr_matrix(L, dtype=complex), sp.csr_matrix(R, dtype=complex).T.tocsr())
            for c, L, R in sandwiches
            if c != 0
        ]
        # small spaces: dense products beat sparse call overhead
        self._dense = space.dimension <= DENSE_MAX_DIM
        if self._dense:
            self._AL = self.A_left.toarray()
            self._AR = self.A_right_T.toarray().T
            self._S = [(c, L.toarray(), RT.toarray().T) for c, L, RT in self.sandwiches]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self._dense:
            out = self._AL @ X + X @ self._AR
            for c, L, R in self._S:
                out += c * (L @ X @ R)
            return out
        out = self.A_left @ X + (self.A_right_T @ X.T).T
        for c, L, RT in self.sandwiches:
            out += c * (L @ (RT @ X.T).T)
        return out

    def frequency_scale(self) -> float:
        """Upper bound on the fastest oscillation frequency (rad/s).

        Coherences oscillate at energy differences, bounded by twice the
        1-norm of the shifted Hamiltonian.
        """
        d = self.A_left.shape[0]
        herm = 0.5j * (self.A_left - self.A_left.conj().T)  # ≈ H
        shift = herm.diagonal().real.mean() if d else 0.0
        h = herm - shift * sp.identity(d, format="csr")
        return 2 * float(spla.norm(h, 1)) if h.nnz else 0.0

    def rate_scale(self) -> float:
        decay = 0.5 * (self.A_left + self.A_left.conj().T)
        r = float(spla.norm(decay, 1)) if decay.nnz else 0.0
        for c, L, RT in self.sandwiches:
            r = max(r, abs(c) * float(spla.norm(L, 1)) * float(spla.norm(RT, np.inf)))
        return r

    def default_dt(self) -> float:
        w = self.frequency_scale()
        r = self.rate_scale()
        candidates = []
        if w > 0:
            candidates.append(2 * math.pi / w / 40)
        if r > 0:
            candidates.append(1 / (20 * r))
        return min(candidates) if candidates else math.inf


def compile_liouvillian(spec: LiouvillianSpec) -> Generator:
    space = spec.space
    A = -1j * spec.hamiltonian.sparse()
    sandwiches = []
    for d in spec.dissipators:
        dA, dS = d.terms(space)
        A = A + dA
        sandwiches.extend(dS)
    A = sp.csr_matrix(A)
    return Generator(space, A, A.conj().T, sandwiches)


def lindblad_rhs(rho, spec: LiouvillianSpec) -> Operator:
    """``dρ/dt`` for the given Liouvillian."""
    if rho.space != spec.space:
        raise ValueError("density operator and Liouvillian live on different spaces")
    gen = compile_liouvillian(spec)
    return Operator(rho.space, gen(rho.dense()))


# ---------------------------------------------------------------------------
# Integration


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4_fixed"
    dt: Optional[float] = None
    tolerance: float = 1e-9
    max_step: Optional[float] = None
    renormalize_trace: bool = False

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "adaptive_embedded"):
            raise ValueError("method must be 'rk4_fixed' or 'adaptive_embedded'")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def _sample_grid(duration, sample_times):
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if sample_times is None:
        times = [0.0, float(duration)]
    else:
        times = [float(t) for t in sample_times]
        if any(t < 0 or t > duration * (1 + 1e-12) for t in times):
            raise ValueError("sample times must lie in [0, duration]")
    times = sorted(set(times))
    return times


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    X0: np.ndarray,
    times: Sequence[float],
    config: IntegratorConfig,
    dt: float,
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> list[np.ndarray]:
    """Integrate ``dX/dt = rhs(X)`` from t=0 and return X at each of ``times``."""
    X = np.array(X0, dtype=complex)
    out = []
    t = 0.0
    if config.method == "rk4_fixed":
        step = config.dt or dt
        if config.max_step:
            step = min(step, config.max_step)
        for t_next in times:
            span = t_next - t
            if span > 0:
                n = max(1, math.ceil(span / step - 1e-9))
                h = span / n
                for _ in range(n):
                    k1 = rhs(X)
                    k2 = rhs(X + 0.5 * h * k1)
                    k3 = rhs(X + 0.5 * h * k2)
                    k4 = rhs(X + h * k3)
                    X = X + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
                    if post_step is not None:
                        X = post_step(X)
                t = t_next
            out.append(X.copy())
        return out

    shape = X.shape
    t_end = times[-1]
    if t_end == 0:
        return [X.copy() for _ in times]
    max_step = config.max_step or (config.dt or np.inf)

    def f(_t, y):
        return rhs(y.reshape(shape)).reshape(-1)

    sol = solve_ivp(
        f,
        (0.0, t_end),
        X.reshape(-1),
        method="DOP853",
        t_eval=times,
        rtol=config.tolerance,
        atol=config.tolerance * 1e-2,
        max_step=max_step,
    )
    if sol.status != 0:
        raise IntegrationError(f"adaptive integration failed at t={sol.t[-1] if sol.t.size else 0:.3e}: {sol.message}")
    for k in range(len(times)):
        Y = sol.y[:, k].reshape(shape)
        out.append(post_step(Y) if post_step is not None else Y)
    return out


@dataclass
class Diagnostics:
    trace_drift: list = field(default_factory=list)
    hermiticity: list = field(default_factory=list)
    min_eigenvalue: list = field(default_factory=list)

    def worst(self) -> dict:
        return {
            "trace_drift": max(self.trace_drift, default=0.0),
            "hermiticity": max(self.hermiticity, default=0.0),
            "min_eigenvalue": min(self.min_eigenvalue, default=0.0),
        }


@dataclass
class Trajectory:
    times: list
    states: list
    diagnostics: Diagnostics

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.states)

    def __getitem__(self, k):
        return self.times[k], self.states[k]

    @property
    def final(self) -> DensityOperator:
        return self.states[-1]


EIGEN_CHECK_MAX_DIM = 4096


def evolve(
    rho0: DensityOperator,
    spec: LiouvillianSpec,
    duration: float,
    config: Optional[IntegratorConfig] = None,
    sample_times: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Integrate the master equation and sample the density operator.

    Raw trace drift, Hermiticity error and minimum eigenvalue are recorded at
    every sample; with ``renormalize_trace`` the stored states are rescaled
    after each step while the reported drift stays the raw one.
    """
    if rho0.space != spec.space:
        raise ValueError("initial state and Liouvillian live on different spaces")
    config = config or IntegratorConfig()
    times = _sample_grid(duration, sample_times)
    gen = compile_liouvillian(spec)
    raw_drift = [0.0]

    def post(X):
        if config.renormalize_trace:
            tr = np.trace(X).real
            raw_drift[0] = max(raw_drift[0], abs(tr - 1))
            return X / tr
        return X

    mats = integrate(gen, rho0.dense(), times, config, gen.default_dt(), post)
    diag = Diagnostics()
    states = []
    for M in mats:
        rho = DensityOperator(rho0.space, M)
        tr = np.trace(M)
        diag.trace_drift.append(max(abs(tr - 1), raw_drift[0]) if config.renormalize_trace else abs(tr - 1))
        diag.hermiticity.append(rho.hermiticity_error())
        if M.shape[0] <= EIGEN_CHECK_MAX_DIM:
            diag.min_eigenvalue.append(rho.min_eigenvalue())
        states.append(rho)
    return Trajectory(times, states, diag)


# ---------------------------------------------------------------------------
# Off-diagonal qubit-pair block


@dataclass(frozen=True)
class BlockParams:
    """Parameters of the ``ρ_{ge,eg}`` mechanical block of two sites.

    ``gamma_q_tilde`` is the pure-dephasing coherence rate of one qubit
    (T₂ = 1/γ̃), so the two-qubit block loses ``2γ̃`` per unit time.
    """

    omega_m: float
    lambda_a: float
    lambda_b: float
    gamma_m: float = 0.0
    n_bar: float = 0.0
    gamma_q_tilde: float = 0.0


def block_space(truncation: int) -> CompositeSpace:
    return space_of(boson(truncation), boson(truncation))


def block_generator(params: BlockParams, space: CompositeSpace) -> Generator:
    if len(space) != 2 or any(s.kind != "boson" for s in space.subsystems):
        raise ValueError("the off-diagonal block lives on two bosonic modes")
    N = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
    sandwiches = []
    decay = sp.csr_matrix((space.dimension, space.dimension), dtype=complex)
    forces = []
    for i in (0, 1):
        trunc = space.subsystems[i].truncation
        N = N + embed(number(trunc), space, i).matrix
        b = embed(annihilation(trunc), space, i).matrix
        forces.append(b + b.conj().T)
        th = BosonThermal(params.gamma_m, params.n_bar, i)
        dA, dS = th.terms(space)
        decay = decay + dA
        sandwiches.extend(dS)
    eye = sp.identity(space.dimension, format="csr", dtype=complex)
    A_L = -1j * params.omega_m * N + decay - params.gamma_q_tilde * eye - 1j * params.lambda_a * forces[0]
    A_R = 1j * params.omega_m * N + decay - params.gamma_q_tilde * eye + 1j * params.lambda_b * forces[1]
    return Generator(space, A_L, A_R, sandwiches)


def offdiagonal_block_rhs(block: Operator, params: BlockParams) -> Operator:
    """Time derivative of the ``ρ_{ge,eg}`` mechanical block.

    Free rotation, thermal damping and qubit dephasing act on both sides;
    site A's force multiplies from the left (``−iλ_A(b_A + b_A†)·X``) and
    site B's from the right (``+iλ_B X·(b_B + b_B†)``).
    """
    gen = block_generator(params, block.space)
    return Operator(block.space, gen(block.dense()))


def evolve_block(
    block0: Operator,
    params: BlockParams,
    sample_times: Sequence[float],
    config: Optional[IntegratorConfig] = None,
):
    """Integrate the full two-mode block; returns ``(times, matrices)``."""
    config = config or IntegratorConfig()
    gen = block_generator(params, block0.space)
    times = _sample_grid(max(sample_times), sample_times)
    return times, integrate(gen, block0.dense(), times, config, gen.default_dt())


def site_factor_generator(
    omega_m: float, coupling: float, gamma_m: float, n_bar: float, truncation: int, side: str
) -> Generator:
    """Single-mode part of the block generator for one site.

    ``side="left"`` applies the force from the left (site A),
    ``side="right"`` from the right (site B).  Dephasing is left out; it is
    a scalar factor of the whole block.
    """
    space = space_of(boson(truncation))
    N = number(truncation).sparse()
    b = annihilation(truncation).sparse()
    F = b + b.conj().T
    decay, sandwiches = BosonThermal(gamma_m, n_bar, 0).terms(space)
    A_L = -1j * omega_m * N + decay
    A_R = 1j * omega_m * N + decay
    if side == "left":
        A_L = A_L - 1j * coupling * F
    elif side == "right":
        A_R = A_R + 1j * coupling * F
    else:
        raise ValueError("side must be 'left' or 'right'")
    return Generator(space, A_L, A_R, sandwiches)


def block_truncation(
    omega_m: float,
    coupling: float,
    gamma_m: float,
    n_bar: float,
    n_initial: float,
    duration: float,
    tail: float = 1e-4,
) -> int:
    """Fock cutoff for one block factor.

    Covers the occupation reached by ``duration``,
    ``n₀e^{−γt} + n̄(1 − e^{−γt})``, and the loop diameter ``2|λ|/ω_m``.
    """
    relax = -math.expm1(-gamma_m * duration)
    occ = n_initial * (1 - relax) + n_bar * relax
    return thermal_cutoff(occ, tail, alpha_max=2 * abs(coupling) / omega_m)


@dataclass
class FactorizedBlock:
    """Block ``e^{−2γ̃t} X_A(t) ⊗ X_B(t)`` sampled at ``times``."""

    times: list
    factor_a: list
    factor_b: list
    gamma_q_tilde: float

    def scalar(self, k: int) -> float:
        return math.exp(-2 * self.gamma_q_tilde * self.times[k])

    def block(self, k: int) -> np.ndarray:
        return self.scalar(k) * np.kron(self.factor_a[k], self.factor_b[k])

    def traces(self) -> np.ndarray:
        return np.array(
            [self.scalar(k) * np.trace(a) * np.trace(b) for k, (a, b) in enumerate(zip(self.factor_a, self.factor_b))]
        )


def evolve_block_factorized(
    params: BlockParams,
    factor_a0: np.ndarray,
    factor_b0: np.ndarray,
    sample_times: Sequence[float],
    config: Optional[IntegratorConfig] = None,
) -> FactorizedBlock:
    """Evolve a product block ``X_A ⊗ X_B`` one site at a time.

    The two-mode generator is a sum of single-site generators plus the
    scalar ``−2γ̃``, so product blocks stay products and this is exact.
    """
    config = config or IntegratorConfig()
    times = _sample_grid(max(sample_times), sample_times)
    out = []
    for X0, lam, side in ((factor_a0, params.lambda_a, "left"), (factor_b0, params.lambda_b, "right")):
        X0 = np.asarray(X0, dtype=complex)
        gen = site_factor_generator(params.omega_m, lam, params.gamma_m, params.n_bar, X0.shape[0] - 1, side)
        out.append(integrate(gen, X0, times, config, gen.default_dt()))
    return FactorizedBlock(times, out[0], out[1], params.gamma_q_tilde)
