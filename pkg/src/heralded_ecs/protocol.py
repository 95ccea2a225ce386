"""The five-step heralding protocol as a branch-enumerating state machine.

Site layout is (qutrit, mechanics, cavity).  Ideal mode propagates pure
vectors with exact unitaries; open mode integrates the site master equation
stage by stage, mixes the photonic parts on a beam splitter and applies the
detector stage as a quantum instrument on the photonic modes only.

Phase bookkeeping: every branch phase produced by pulses, the displaced
oscillator propagator and the Jaynes–Cummings swap is removed by a virtual
Z rotation on the site qubit.  The removed phases are listed in
``ProtocolResult.phase_table``; open mode reuses the ideal-mode values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
import scipy.linalg as la

from .dynamics import (
    BosonThermal,
    Cascaded,
    IntegratorConfig,
    LiouvillianSpec,
    QubitDephasing,
    TransmonRelaxation,
    evolve,
    integrate,
    compile_liouvillian,
)
from .entanglement import concurrence, entangled_coherent_state, fidelity
from .hamiltonians import (
    DetectorParams,
    SiteParams,
    beam_splitter_matrix,
    dispersive_hamiltonian,
    pulse_matrix,
)
from .hilbert import (
    CompositeSpace,
    DensityOperator,
    Operator,
    PureState,
    annihilation,
    apply_local,
    basis_state,
    boson,
    coherent_amplitudes,
    default_truncation,
    displacement,
    embed,
    number,
    partial_trace,
    projector,
    qubit,
    qutrit,
    space_of,
    tensor_states,
    transition,
)

State = Union[PureState, DensityOperator]
MODES = ("ideal", "open")
ORIENTATIONS = ("same", "reverted")
TRANSFERS = ("unitary", "cascaded")
BRANCHES = {(0, 0): "none", (1, 0): "D1", (0, 1): "D2", (1, 1): "both"}
HERALD_SIGN = {"D1": +1, "D2": -1}


@dataclass(frozen=True)
class NoiseRates:
    """Decoherence rates in rad/s.

    ``gamma_q_tilde`` is the pure-dephasing rate of a qubit coherence
    (T₂ = 1/γ̃); the dissipator is built with twice this value.
    """

    gamma_q_tilde: float = 0.0
    gamma_q: float = 0.0
    gamma_m: float = 0.0
    n_bar: float = 0.0
    kappa_s: float = 0.0
    kappa_p: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")
        if self.efficiency > 1:
            raise ValueError("efficiency must lie in [0, 1]")


@dataclass(frozen=True)
class ProtocolConfig:
    site: SiteParams
    detector: DetectorParams
    n_pulses: int = 0
    alpha: Optional[float] = None
    mode: str = "ideal"
    rates: NoiseRates = NoiseRates()
    mech_truncation: Optional[int] = None
    cavity_truncation: int = 2
    force_orientation: str = "same"
    interaction_time: Optional[float] = None  # single-segment override, n_pulses = 0 only
    recenter: bool = True
    transfer: str = "unitary"
    handoff_time: Optional[float] = None  # cascaded transfer window, default 5/κ_s
    detector_noise: bool = False
    jc_fraction: float = 1.0
    integrator: IntegratorConfig = IntegratorConfig()
    # the nanosecond swap is the stiffest stage
    emission_integrator: IntegratorConfig = IntegratorConfig(method="adaptive_embedded", tolerance=1e-10)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.force_orientation not in ORIENTATIONS:
            raise ValueError(f"force_orientation must be one of {ORIENTATIONS}")
        if self.transfer not in TRANSFERS:
            raise ValueError(f"transfer must be one of {TRANSFERS}")
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be >= 0")
        if self.site.omega_m <= 0:
            raise ValueError("omega_m must be positive")
        if self.interaction_time is not None:
            if self.n_pulses != 0:
                raise ValueError("interaction_time override needs n_pulses = 0")
            if self.interaction_time < 0:
                raise ValueError("interaction_time must be non-negative")
        if self.alpha is not None:
            derived = self.nominal_alpha()
            if not math.isclose(self.alpha, derived, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"alpha = {self.alpha} is inconsistent with (N_p+1)(λ_e−λ_g)/ω_m = {derived}"
                )

    @classmethod
    def from_alpha(cls, alpha: float, site: SiteParams, detector: DetectorParams, n_pulses: int = 0, **kw):
        """Choose λ_e so that ``(N_p+1)(λ_e−λ_g)/ω_m = α``."""
        lam = site.lambda_g + alpha * site.omega_m / (n_pulses + 1)
        return cls(site=replace(site, lambda_e=lam), detector=detector, n_pulses=n_pulses, alpha=alpha, **kw)

    def nominal_alpha(self) -> float:
        return (self.n_pulses + 1) * (self.site.lambda_e - self.site.lambda_g) / self.site.omega_m

    def site_params(self, site: str) -> SiteParams:
        if site == "A" or self.force_orientation == "same":
            return self.site
        p = self.site
        return replace(p, lambda_g=-p.lambda_g, lambda_e=-p.lambda_e, lambda_f=-p.lambda_f)

    def segment_time(self) -> float:
        if self.interaction_time is not None:
            return self.interaction_time
        return math.pi / self.site.omega_m

    def mech_cutoff(self) -> int:
        if self.mech_truncation is not None:
            return self.mech_truncation
        return default_truncation(max_excursion(self))


# ---------------------------------------------------------------------------
# Classical branch bookkeeping


def branch_displacements(config: ProtocolConfig, site: str = "A", recentered: bool = False):
    """Coherent amplitudes of the g and e branches after step 2.

    Each free segment rotates a branch by ω_m t about its centre
    ``−λ_j/ω_m``; each π pulse swaps the branch labels.
    """
    p = config.site_params(site)
    w = p.omega_m
    t = config.segment_time()
    rot = np.exp(-1j * w * t)
    amp = {0: 0j, 1: 0j}  # keyed by current qubit level
    for seg in range(config.n_pulses + 1):
        if seg:
            amp = {0: amp[1], 1: amp[0]}
        for j, lam in ((0, p.lambda_g), (1, p.lambda_e)):
            c = -lam / w
            amp[j] = c + (amp[j] - c) * rot
    if recentered:
        mid = 0.5 * (amp[0] + amp[1])
        return amp[0] - mid, amp[1] - mid
    return amp[0], amp[1]


def max_excursion(config: ProtocolConfig) -> float:
    """Largest coherent amplitude reached by any branch during step 2 (both sites)."""
    w = config.site.omega_m
    t = config.segment_time()
    rot = np.exp(-1j * w * t)
    # the arc swept in one segment stays within |c| + |β − c| of the origin
    full_turn = w * t >= math.pi
    worst = 0.0
    for site in ("A", "B"):
        p = config.site_params(site)
        amp = {0: 0j, 1: 0j}
        for seg in range(config.n_pulses + 1):
            if seg:
                amp = {0: amp[1], 1: amp[0]}
            for j, lam in ((0, p.lambda_g), (1, p.lambda_e)):
                c = -lam / w
                r = abs(amp[j] - c)
                worst = max(worst, abs(c) + r if full_turn else max(abs(amp[j]), abs(c) + r))
                amp[j] = c + (amp[j] - c) * rot
    mid = abs(branch_midpoint(config, "A"))
    return worst + mid


def branch_midpoint(config: ProtocolConfig, site: str = "A") -> complex:
    bg, be = branch_displacements(config, site)
    return 0.5 * (bg + be) if config.recenter else 0j


def target_alpha(config: ProtocolConfig, site: str = "A") -> complex:
    """Displacement of the g branch in the final frame (``+α`` of the protocol)."""
    bg, _ = branch_displacements(config, site)
    return bg - branch_midpoint(config, site)


# ---------------------------------------------------------------------------
# Spaces and local operators


def site_space(config: ProtocolConfig) -> CompositeSpace:
    if config.cavity_truncation < 2:
        raise ValueError("cavity truncation must be >= 2 to hold the two-photon beam-splitter output")
    return space_of(qutrit(), boson(config.mech_cutoff()), boson(config.cavity_truncation))


def _virtual_z(phase_e: float) -> np.ndarray:
    return np.diag([1, np.exp(1j * phase_e), 1]).astype(complex)


def _branch_propagator(lam: float, omega: float, t: float, trunc: int) -> np.ndarray:
    """``e^{iλ²t/ω} D(−λ/ω) e^{−iωt n} D(λ/ω)``: exact evolution under ω n + λ(b+b†)."""
    d = lam / omega
    if d == 0:
        return np.diag(np.exp(-1j * omega * t * np.arange(trunc + 1)))
    D = displacement(d, trunc).dense()
    free = np.exp(-1j * omega * t * np.arange(trunc + 1))
    return np.exp(1j * lam**2 * t / omega) * (D.conj().T * free) @ D


def _conditional_step_matrix(p: SiteParams, t: float, trunc: int) -> np.ndarray:
    """Block-diagonal (qutrit ⊗ mechanics) propagator for one free segment."""
    blocks = [_branch_propagator(lam, p.omega_m, t, trunc) for lam in p.lambdas()]
    return la.block_diag(*blocks)


def _jc_matrix(chi: float, t: float, cav_trunc: int) -> np.ndarray:
    """``exp(−iχt(|f⟩⟨e|a + h.c.))`` on (qutrit, cavity)."""
    a = annihilation(cav_trunc).dense()
    fe = np.zeros((3, 3))
    fe[2, 1] = 1
    g = np.kron(fe, a)
    return la.expm(-1j * chi * t * (g + g.conj().T))


def _jc_time(config: ProtocolConfig) -> float:
    if config.site.chi <= 0:
        raise ValueError("photon emission needs chi > 0")
    return config.jc_fraction * math.pi / (2 * config.site.chi)


def _apply(state: State, matrix: np.ndarray, indices) -> State:
    if isinstance(state, PureState):
        return apply_local(matrix, state, indices)
    space = state.space
    U = _full(matrix, space, indices)
    return DensityOperator(space, U @ state.dense() @ U.conj().T)


def _full(matrix, space: CompositeSpace, indices) -> np.ndarray:
    """Dense full-space matrix of a local operator (small spaces only)."""
    d = space.dimension
    cols = [apply_local(matrix, PureState(space, np.eye(d, dtype=complex)[:, k]), indices).amplitudes for k in range(d)]
    return np.array(cols).T


# ---------------------------------------------------------------------------
# Site stages


def site_dissipators(config: ProtocolConfig):
    r = config.rates
    return (
        QubitDephasing(2 * r.gamma_q_tilde, 0),
        TransmonRelaxation(r.gamma_q, 0),
        BosonThermal(r.gamma_m, r.n_bar, 1),
    )


def initialize(config: ProtocolConfig, site: str = "A") -> State:
    """``|g,0,0⟩`` followed by a π/2 (g↔e) pulse, giving ``|+,0,0⟩``."""
    space = site_space(config)
    psi = basis_state(space, ["g", 0, 0])
    psi = apply_local(pulse_matrix("ge", math.pi / 2), psi, [0])
    if config.mode == "open":
        return DensityOperator.from_pure(psi)
    return psi


@dataclass
class StageLog:
    phase_table: dict = field(default_factory=dict)
    hygiene: list = field(default_factory=list)

    def worst(self) -> dict:
        keys = ("trace_drift", "hermiticity")
        out = {k: max((h[k] for h in self.hygiene), default=0.0) for k in keys}
        out["min_eigenvalue"] = min((h["min_eigenvalue"] for h in self.hygiene), default=0.0)
        return out


def _displacement_phase(psi: PureState, config: ProtocolConfig, site: str) -> tuple[float, float]:
    """Phases of the g and e branches relative to ``|g,α,0⟩``, ``|e,−α,0⟩``."""
    T = psi.space.subsystems[1].truncation
    alpha = target_alpha(config, site)
    _, be = branch_displacements(config, site)
    beta_e = be - branch_midpoint(config, site)
    amps = psi.amplitudes.reshape(psi.space.dims)
    a_g = np.vdot(coherent_amplitudes(alpha, T), amps[0, :, 0])
    a_e = np.vdot(coherent_amplitudes(beta_e, T), amps[1, :, 0])
    return float(np.angle(a_g)), float(np.angle(a_e))


def conditional_displacement(state: State, config: ProtocolConfig, site: str = "A", log: Optional[StageLog] = None) -> State:
    """N_p + 1 free segments separated by π (g↔e) pulses, then recentring and phase removal.

    Ideal mode uses the exact displaced-oscillator propagator; open mode
    integrates the site master equation.  For even N_p the branches end
    symmetric about ``−λ/ω_m``; the frame is shifted so they sit at ``±α``.
    """
    p = config.site_params(site)
    t = config.segment_time()
    space = state.space
    pi_pulse = pulse_matrix("ge", math.pi)
    log = log if log is not None else StageLog()

    if isinstance(state, PureState):
        state = _ideal_segments(state, config, site)
    else:
        H = _site_hamiltonian_idle(p, space)
        spec = LiouvillianSpec(H, site_dissipators(config))
        for seg in range(config.n_pulses + 1):
            if seg:
                state = _apply(state, pi_pulse, [0])
            traj = evolve(state, spec, t, config.integrator)
            log.hygiene.append(traj.diagnostics.worst())
            state = traj.final

    state = _recenter(state, config, site)

    key = f"displace_{site}"
    if key not in log.phase_table:
        ref = state if isinstance(state, PureState) else _ideal_reference(config, site)
        pg, pe = _displacement_phase(ref, config, site)
        log.phase_table[key] = {"global": -pg, "e": pg - pe}
    ph = log.phase_table[key]
    state = _apply(state, _virtual_z(ph["e"]), [0])
    if isinstance(state, PureState):
        state = state * np.exp(1j * ph["global"])
    return state


def _site_hamiltonian_idle(p: SiteParams, space: CompositeSpace) -> Operator:
    """Step-2 Hamiltonian: ω_m b†b + Σ_j λ_j(b+b†)|j⟩⟨j|; the JC term is idle without f population."""
    from .hamiltonians import site_hamiltonian

    return site_hamiltonian(replace(p, chi=0.0, frame="rotating"), space)


def _jc_hamiltonian(chi: float, space: CompositeSpace) -> Operator:
    q = space.subsystems[0]
    a = embed(annihilation(space.subsystems[2].truncation), space, 2)
    g = embed(transition(q, "f", "e"), space, 0) @ a
    return chi * (g + g.dag())


def photon_emission(state: State, config: ProtocolConfig, site: str = "A", log: Optional[StageLog] = None) -> State:
    """π (e↔f) pulse then a Jaynes–Cummings swap ``|f,0⟩ → |e,1⟩`` of length π/(2χ).

    The swap takes a few nanoseconds, so the mechanics is held fixed during
    it.  The swap's −i on ``|e,1⟩`` is removed by a virtual Z.
    """
    space = state.space
    if space.subsystems[2].truncation < 2:
        raise ValueError("cavity truncation must be >= 2")
    log = log if log is not None else StageLog()
    t = _jc_time(config)
    state = _apply(state, pulse_matrix("ef", math.pi), [0])
    if isinstance(state, PureState):
        state = apply_local(_jc_matrix(config.site.chi, t, space.subsystems[2].truncation), state, [0, 2])
    else:
        spec = LiouvillianSpec(_jc_hamiltonian(config.site.chi, space), site_dissipators(config))
        traj = evolve(state, spec, t, config.emission_integrator)
        log.hygiene.append(traj.diagnostics.worst())
        state = traj.final
    key = "emit"
    if key not in log.phase_table:
        # amplitude of |e,1⟩ after the swap from |f,0⟩ is −i·sin(θ)
        log.phase_table[key] = {"e": math.pi / 2}
    return _apply(state, _virtual_z(log.phase_table[key]["e"]), [0])


def _ideal_segments(psi: PureState, config: ProtocolConfig, site: str) -> PureState:
    p = config.site_params(site)
    step = _conditional_step_matrix(p, config.segment_time(), psi.space.subsystems[1].truncation)
    pi_pulse = pulse_matrix("ge", math.pi)
    for seg in range(config.n_pulses + 1):
        if seg:
            psi = apply_local(pi_pulse, psi, [0])
        psi = apply_local(step, psi, [0, 1])
    return psi


def _recenter(state: State, config: ProtocolConfig, site: str) -> State:
    mid = branch_midpoint(config, site)
    if mid == 0:
        return state
    return _apply(state, displacement(-mid, state.space.subsystems[1].truncation).dense(), [1])


def _ideal_reference(config: ProtocolConfig, site: str) -> PureState:
    """Step-2 output of the ideal run before phase removal."""
    ideal = replace(config, mode="ideal")
    return _recenter(_ideal_segments(initialize(ideal, site), ideal, site), ideal, site)


def run_site(config: ProtocolConfig, site: str, log: StageLog) -> dict:
    stages = {}
    s = initialize(config, site)
    stages["initialize"] = s
    s = conditional_displacement(s, config, site, log)
    stages["displace"] = s
    s = photon_emission(s, config, site, log)
    stages["emit"] = s
    return stages


# ---------------------------------------------------------------------------
# Heralding


@dataclass
class PostselectionRecord:
    sign: int
    probability: float
    outcomes: dict  # "gg" etc. → probability
    state: DensityOperator  # mechanics of both sites
    fidelity: float


@dataclass
class HeraldRecord:
    label: str
    probability: float
    state: Optional[State]
    leakage: float = 0.0
    postselection: dict = field(default_factory=dict)

    @property
    def herald_sign(self) -> Optional[int]:
        return HERALD_SIGN.get(self.label)

    @property
    def p_plus(self) -> Optional[float]:
        r = self.postselection.get(+1)
        return None if r is None else r.probability

    @property
    def p_minus(self) -> Optional[float]:
        r = self.postselection.get(-1)
        return None if r is None else r.probability


RAMSEY_CLOSE = pulse_matrix("ge", -math.pi / 2, dim=2)
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)


def parity_gate_matrix(cav_trunc: int) -> np.ndarray:
    """``C_π = |g⟩⟨g| ⊗ 1 + |e⟩⟨e| ⊗ e^{iπ n}`` on (qubit, cavity)."""
    n = np.arange(cav_trunc + 1)
    return la.block_diag(np.eye(cav_trunc + 1), np.diag((-1.0) ** n)).astype(complex)


def interfere_and_detect(state_a: PureState, state_b: PureState, config: ProtocolConfig) -> list[HeraldRecord]:
    """Beam splitter on the two cavities, ideal parity gates, Ramsey readout.

    Joint layout ``(qA, mA, cA, qB, mB, cB, d1, d2)``; after the beam
    splitter cA and cB are the detector modes D1 and D2.  Conditional states
    are kept as joint pure vectors.
    """
    joint = tensor_states(state_a, state_b)
    T = config.cavity_truncation
    joint = apply_local(beam_splitter_matrix(T), joint, [2, 5])
    det = PureState(space_of(qubit(), qubit()), np.kron(PLUS, PLUS))
    joint = tensor_states(joint, det)
    gate = parity_gate_matrix(T)
    joint = apply_local(gate, joint, [6, 2])
    joint = apply_local(gate, joint, [7, 5])
    joint = apply_local(RAMSEY_CLOSE, joint, [6])
    joint = apply_local(RAMSEY_CLOSE, joint, [7])
    amps = joint.amplitudes.reshape(joint.space.dims)
    records = []
    for (f1, f2), label in BRANCHES.items():
        proj = np.zeros_like(amps)
        proj[..., f1, f2] = amps[..., f1, f2]
        prob = float(np.sum(np.abs(proj) ** 2))
        st = PureState(joint.space, proj.reshape(-1) / math.sqrt(prob)) if prob > 0 else None
        records.append(HeraldRecord(label, prob, st))
    return records


def site_pure_state(record: HeraldRecord, tol: float = 1e-8) -> Optional[PureState]:
    """Site part (qA, mA, qB, mB) of an ideal conditional state, if it factorizes."""
    st = record.state
    if not isinstance(st, PureState):
        return None
    dims = st.space.dims
    amps = st.amplitudes.reshape(dims).transpose(0, 1, 3, 4, 2, 5, 6, 7)
    site_dim = dims[0] * dims[1] * dims[3] * dims[4]
    M = amps.reshape(site_dim, -1)
    k = int(np.argmax(np.sum(np.abs(M) ** 2, axis=0)))
    col = M[:, k]
    rest = col.conj() @ M / np.vdot(col, col)
    residual = np.linalg.norm(M - np.outer(col, rest))
    if residual > tol:
        return None
    vec = col * np.linalg.norm(rest)
    space = CompositeSpace([st.space.subsystems[i] for i in (0, 1, 3, 4)])
    return PureState(space, vec / np.linalg.norm(vec))


def _site_layout_state(record: HeraldRecord):
    """Conditional state on (qA, mA, qB, mB), pure when possible."""
    if isinstance(record.state, DensityOperator):
        return record.state
    return site_pure_state(record)


def heralded_two_qubit_state(record: HeraldRecord) -> np.ndarray:
    """4x4 state of the two site qubits (g, e levels), renormalized after dropping f."""
    st = _site_layout_state(record)
    if st is None:
        st = record.state
        red = partial_trace(st, {0, 3}).dense()
    else:
        red = partial_trace(st, {0, 2}).dense()
    red = red.reshape(3, 3, 3, 3)[:2, :2, :2, :2].reshape(4, 4)
    return red / np.trace(red).real


def heralded_concurrence(record: HeraldRecord) -> float:
    return concurrence(heralded_two_qubit_state(record))


def disentangle_and_postselect(record: HeraldRecord, config: ProtocolConfig) -> dict:
    """π/2 pulses on both site qubits; group the four readouts into ψ± branches.

    For the D1 (symmetric) herald, gg and ee give ψ+ and ge, eg give ψ−;
    the D2 herald swaps the grouping.
    """
    sign = record.herald_sign
    if sign is None:
        raise ValueError("post-selection applies to single-flip branches only")
    st = _site_layout_state(record)
    if st is None:
        raise ValueError("conditional state does not factorize from the detectors")
    half = pulse_matrix("ge", math.pi / 2)
    st = _apply(st, half, [0])
    st = _apply(st, half, [2])
    alpha = target_alpha(config, "A")
    T = st.space.subsystems[1].truncation
    reverted = config.force_orientation == "reverted"
    groups = {+1: [], -1: []}
    for a in (0, 1):
        for b in (0, 1):
            same = a == b
            branch = sign if same else -sign
            groups[branch].append((a, b))
    out = {}
    names = "ge"
    for branch, pairs in groups.items():
        prob = 0.0
        probs = {}
        rho = None
        for a, b in pairs:
            red = _project_mechanics(st, a, b)
            p = float(np.trace(red).real)
            probs[names[a] + names[b]] = p
            prob += p
            rho = red if rho is None else rho + red
        if prob <= 1e-15:
            out[branch] = PostselectionRecord(branch, prob, probs, None, float("nan"))
            continue
        rho = DensityOperator(space_of(boson(T), boson(T)), rho / prob)
        if alpha == 0 and branch == -1:
            fid = float("nan")
        else:
            target = _ecs_target(alpha, branch, T, reverted)
            fid = fidelity(rho, target)
        out[branch] = PostselectionRecord(branch, prob, probs, rho, fid)
    record.postselection = out
    return out


def _project_mechanics(st: State, a: int, b: int) -> np.ndarray:
    dims = st.space.dims
    if isinstance(st, PureState):
        amps = st.amplitudes.reshape(dims)[a, :, b, :]
        v = amps.reshape(-1)
        return np.outer(v, v.conj())
    M = st.dense().reshape(dims + dims)[a, :, b, :, a, :, b, :]
    d = dims[1] * dims[3]
    return M.reshape(d, d)


def _ecs_target(alpha: complex, sign: int, T: int, reverted: bool) -> PureState:
    if not reverted:
        return entangled_coherent_state(alpha, sign, T)
    # reverted force at B: branches |±α⟩_A|±α⟩_B
    plus = coherent_amplitudes(alpha, T)
    minus = coherent_amplitudes(-alpha, T)
    vec = np.kron(minus, minus) + sign * np.kron(plus, plus)
    return PureState(space_of(boson(T), boson(T)), vec / np.linalg.norm(vec))


# ---------------------------------------------------------------------------
# Open-mode merge and detector stage


def detector_space(cav_trunc: int) -> CompositeSpace:
    return space_of(qubit(), boson(cav_trunc), qubit(), boson(cav_trunc))


def detector_liouvillian(config: ProtocolConfig) -> LiouvillianSpec:
    T = config.cavity_truncation
    space = detector_space(T)
    H = Operator(space, np.zeros((space.dimension, space.dimension)))
    for q, c in ((0, 1), (2, 3)):
        local = dispersive_hamiltonian(config.detector, space_of(qubit(), boson(T)))
        H = H + Operator(space, _full(local.dense(), space, [q, c]))
    r = config.rates
    diss = [BosonThermal(r.kappa_p, 0.0, 1), BosonThermal(r.kappa_p, 0.0, 3)]
    if config.detector_noise:
        for q in (0, 2):
            diss += [QubitDephasing(2 * r.gamma_q_tilde, q), TransmonRelaxation(r.gamma_q, q)]
    return LiouvillianSpec(H, tuple(d for d in diss if d.rate > 0))


def parity_gate_open(
    state: DensityOperator,
    params: DetectorParams,
    duration: Optional[float] = None,
    dissipators=(),
    config: Optional[IntegratorConfig] = None,
) -> DensityOperator:
    """Dispersive evolution of a (qubit, cavity) state for ``πΔ/χ_p²`` by default."""
    duration = params.parity_time if duration is None else duration
    config = config or IntegratorConfig(method="adaptive_embedded", tolerance=1e-11)
    spec = LiouvillianSpec(dispersive_hamiltonian(params, state.space), tuple(dissipators))
    return evolve(state, spec, duration, config).final


def detector_instrument(config: ProtocolConfig) -> dict:
    """Effect matrices ``F_o[i, j] = Tr[P_o R Φ(|i⟩⟨j| ⊗ |+⟩⟨+|²) R†]`` on (D1, D2)."""
    T = config.cavity_truncation
    spec = detector_liouvillian(config)
    space = spec.space
    gen = compile_liouvillian(spec)
    integ = IntegratorConfig(method="adaptive_embedded", tolerance=1e-11)
    d = (T + 1) ** 2
    plus = np.outer(PLUS, PLUS.conj())
    ramsey = _full(np.kron(RAMSEY_CLOSE, RAMSEY_CLOSE), space, [0, 2])
    dims = space.dims
    F = {label: np.zeros((d, d), dtype=complex) for label in BRANCHES.values()}
    t = config.detector.parity_time
    for i in range(d):
        for j in range(d):
            phot = np.zeros((d, d), dtype=complex)
            phot[i, j] = 1
            # (D1, D2) ⊗ (q1, q2) → layout (q1, D1, q2, D2)
            X = np.kron(phot, np.kron(plus, plus)).reshape(T + 1, T + 1, 2, 2, T + 1, T + 1, 2, 2)
            X = X.transpose(2, 0, 3, 1, 6, 4, 7, 5).reshape(space.dimension, space.dimension)
            X = integrate(gen, X, [t], integ, gen.default_dt())[-1]
            X = ramsey @ X @ ramsey.conj().T
            diag = np.diagonal(X).reshape(dims)
            for (f1, f2), label in BRANCHES.items():
                F[label][i, j] = diag[f1, :, f2, :].sum()
    return F


def cascaded_transfer(config: ProtocolConfig) -> np.ndarray:
    """Channel matrix from site cavities (A, B) to detector cavities (D1, D2).

    ``K[(i, j), (k, l)] = ⟨i|Tr_{A,B} Φ(|k⟩⟨l| ⊗ |00⟩⟨00|)|j⟩`` over the
    handoff window, with site qubits and mechanics held fixed.
    """
    T = config.cavity_truncation
    r = config.rates
    space = space_of(*(boson(T) for _ in range(4)))  # (A, B, D1, D2)
    H = Operator(space, np.zeros((space.dimension, space.dimension)))
    spec = LiouvillianSpec(H, (Cascaded(r.kappa_s, r.kappa_p, r.efficiency, 0, 1, ((2, +1), (3, -1))),))
    gen = compile_liouvillian(spec)
    t = config.handoff_time if config.handoff_time is not None else 5 / r.kappa_s
    d = (T + 1) ** 2
    vac = np.zeros((d, d))
    vac[0, 0] = 1
    K = np.zeros((d, d, d, d), dtype=complex)
    integ = IntegratorConfig(method="adaptive_embedded", tolerance=1e-10)
    for k in range(d):
        for l in range(d):
            src = np.zeros((d, d))
            src[k, l] = 1
            X = integrate(gen, np.kron(src, vac), [t], integ, gen.default_dt())[-1]
            X = X.reshape(d, d, d, d)
            K[:, :, k, l] = np.einsum("aiaj->ij", X)
    return K


def photonic_effects(config: ProtocolConfig) -> dict:
    """Effects on the input site cavities (A, B) for each detector branch."""
    F = detector_instrument(config)
    if config.transfer == "unitary":
        U = beam_splitter_matrix(config.cavity_truncation)
        return {k: U.T @ v @ U.conj() for k, v in F.items()}
    K = cascaded_transfer(config)
    return {k: np.einsum("ij,ijkl->kl", v, K) for k, v in F.items()}


def merge_and_detect(rho_a: DensityOperator, rho_b: DensityOperator, config: ProtocolConfig) -> list[HeraldRecord]:
    """Conditional site states ``Σ G[(a,b),(a',b')] ϱ_A^{aa'} ⊗ ϱ_B^{bb'}`` per branch."""
    T = config.cavity_truncation
    dims = rho_a.space.dims
    x = dims[0] * dims[1]
    RA = rho_a.dense().reshape(x, T + 1, x, T + 1)
    RB = rho_b.dense().reshape(x, T + 1, x, T + 1)
    G = photonic_effects(config)
    out_space = CompositeSpace([rho_a.space.subsystems[0], rho_a.space.subsystems[1]] * 2)
    records = []
    for label, g in G.items():
        g4 = g.reshape(T + 1, T + 1, T + 1, T + 1)
        rho = np.einsum("abcd,xayc,ubvd->xuyv", g4, RA, RB, optimize=True).reshape(x * x, x * x)
        prob = float(np.trace(rho).real)
        st = None
        leak = 0.0
        if prob > 1e-14:
            rho = 0.5 * (rho + rho.conj().T) / prob
            st = DensityOperator(out_space, rho)
            pops = np.diagonal(rho).real.reshape(out_space.dims)
            leak = float(pops[2].sum() + pops[:, :, 2].sum() - pops[2, :, 2].sum())
        records.append(HeraldRecord(label, prob, st, leakage=leak))
    return records


# ---------------------------------------------------------------------------
# Full run


@dataclass
class ProtocolResult:
    config: ProtocolConfig
    records: list
    stages: dict
    phase_table: dict
    hygiene: dict

    def record(self, label: str) -> HeraldRecord:
        for r in self.records:
            if r.label == label:
                return r
        raise KeyError(label)

    @property
    def success_probability(self) -> float:
        return sum(r.probability for r in self.records if r.label in HERALD_SIGN)


def run(config: ProtocolConfig, postselect: bool = True) -> ProtocolResult:
    log = StageLog()
    stages = {}
    for site in ("A", "B"):
        for name, s in run_site(config, site, log).items():
            stages[f"{name}_{site}"] = s
    if config.mode == "ideal":
        records = interfere_and_detect(stages["emit_A"], stages["emit_B"], config)
    else:
        records = merge_and_detect(stages["emit_A"], stages["emit_B"], config)
    if postselect:
        for r in records:
            if r.label in HERALD_SIGN and r.probability > 1e-12:
                disentangle_and_postselect(r, config)
    return ProtocolResult(config, records, stages, log.phase_table, log.worst())


def sample_branches(result: ProtocolResult, shots: int, seed: int) -> dict:
    """Seeded draw of herald labels from the enumerated probabilities."""
    rng = np.random.default_rng(seed)
    labels = [r.label for r in result.records]
    p = np.array([r.probability for r in result.records])
    draws = rng.choice(len(labels), size=shots, p=p / p.sum())
    counts = np.bincount(draws, minlength=len(labels))
    return {l: int(c) for l, c in zip(labels, counts)}


def heralded_target(config: ProtocolConfig, sign: int) -> PureState:
    """``(|g,α⟩_A|e,−α⟩_B ± |e,−α⟩_A|g,α⟩_B)/√2`` on (qA, mA, qB, mB).

    With reverted orientation site B's branches sit at ``∓α`` instead.
    """
    T = config.mech_cutoff()
    a_A = target_alpha(config, "A")
    a_B = target_alpha(config, "B")
    g = np.array([1, 0, 0], dtype=complex)
    e = np.array([0, 1, 0], dtype=complex)

    def site(q, amp):
        return np.kron(q, coherent_amplitudes(amp, T))

    vec = np.kron(site(g, a_A), site(e, -a_B)) + sign * np.kron(site(e, -a_A), site(g, a_B))
    space = space_of(qutrit(), boson(T), qutrit(), boson(T))
    return PureState(space, vec / np.linalg.norm(vec))


def heralded_fidelity(record: HeraldRecord, config: ProtocolConfig) -> float:
    """Fidelity of a single-flip conditional site state with :func:`heralded_target`."""
    if record.herald_sign is None:
        raise ValueError("fidelity is defined for single-flip branches only")
    st = _site_layout_state(record)
    if st is None:
        raise ValueError("conditional state does not factorize from the detectors")
    return fidelity(st, heralded_target(config, record.herald_sign))
