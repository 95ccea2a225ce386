"""Site, detector, pulse and beam-splitter Hamiltonians plus transmon levels.

All rates and energies are angular frequencies (rad/s, ħ = 1).

The qubit-state-dependent force couples to the dimensionless displacement
quadrature ``b + b†``; with that normalization a closed loop under
``λ_e (b + b†)|e⟩⟨e| + ω_m b†b`` reaches ``−2λ_e/ω_m`` after half a period.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .hilbert import (
    CompositeSpace,
    Operator,
    SubsystemSpec,
    annihilation,
    embed,
    identity,
    number,
    projector,
    space_of,
    transition,
)

FRAMES = ("lab", "rotating")
# π/2 pulses with this phase send |g⟩ to (|g⟩ + |e⟩)/√2 with real coefficients.
PULSE_PHASE = -math.pi / 2


@dataclass(frozen=True)
class SiteParams:
    omega_c: float = 0.0
    omega_m: float = 0.0
    Omega_g: float = 0.0
    Omega_e: float = 0.0
    Omega_f: float = 0.0
    lambda_g: float = 0.0
    lambda_e: float = 0.0
    lambda_f: float = 0.0
    chi: float = 0.0
    frame: str = "rotating"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        for name in ("omega_c", "omega_m", "Omega_g", "Omega_e", "Omega_f", "chi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("lambda_g", "lambda_e", "lambda_f"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_g, self.lambda_e, self.lambda_f)


@dataclass(frozen=True)
class TransmonParams:
    E_J: float
    E_C: float
    n_g: float = 0.0
    eta: float = 0.0
    charge_cutoff: int = 40

    def __post_init__(self):
        if self.charge_cutoff < 10:
            raise ValueError("charge_cutoff must be >= 10")
        if self.E_C <= 0:
            raise ValueError("E_C must be positive")
        if self.E_J / self.E_C <= 1:
            warnings.warn("E_J/E_C <= 1 is outside the transmon regime", stacklevel=2)


@dataclass(frozen=True)
class DetectorParams:
    omega_c: float
    chi_p: float
    Delta: float
    Omega_e: Optional[float] = None

    def __post_init__(self):
        if self.Omega_e is None:
            object.__setattr__(self, "Omega_e", self.omega_c + self.Delta)
        if self.Delta != 0 and abs(self.chi_p / self.Delta) > 0.1:
            warnings.warn(
                f"chi_p/Delta = {self.chi_p / self.Delta:.3g} is outside the dispersive regime",
                stacklevel=2,
            )

    @property
    def dispersive_ratio(self) -> float:
        return self.chi_p / self.Delta

    @property
    def dispersive_shift(self) -> float:
        return self.chi_p**2 / self.Delta

    @property
    def parity_time(self) -> float:
        """Interaction time giving a π phase per photon."""
        return math.pi * self.Delta / self.chi_p**2


def _require_layout(space: CompositeSpace, kinds: tuple[str, ...], what: str):
    if tuple(s.kind for s in space.subsystems) != kinds:
        raise ValueError(f"{what} expects subsystems {kinds}, got {tuple(s.kind for s in space.subsystems)}")


def site_hamiltonian(
    params: SiteParams,
    space: CompositeSpace,
    jc_transitions: Optional[tuple[str, ...]] = None,
) -> Operator:
    """Three-level transmon + mechanics + cavity Hamiltonian on (qutrit, mech, cavity).

    In the rotating frame the level energies Ω_j and the cavity energy ω_c
    are removed and only Jaynes–Cummings terms on resonant transitions are
    kept (``jc_transitions``, default ``("ef",)``).  The lab frame keeps
    both ``"ge"`` and ``"ef"`` terms and the vacuum energy ω_m/2.
    """
    _require_layout(space, ("qutrit", "boson", "boson"), "site_hamiltonian")
    q, m, c = space.subsystems
    lab = params.frame == "lab"
    if jc_transitions is None:
        jc_transitions = ("ge", "ef") if lab else ("ef",)

    b = embed(annihilation(m.truncation), space, 1)
    a = embed(annihilation(c.truncation), space, 2)
    force = b + b.dag()
    H = params.omega_m * embed(number(m.truncation), space, 1)
    if lab:
        H = H + (params.omega_m / 2) * identity(space)
        H = H + params.omega_c * embed(number(c.truncation), space, 2)
    energies = (params.Omega_g, params.Omega_e, params.Omega_f)
    for j, (Om, lam) in enumerate(zip(energies, params.lambdas())):
        P = embed(projector(q, j), space, 0)
        if lab and Om:
            H = H + Om * P
        if lam:
            H = H + lam * (P @ force)
    if params.chi:
        lowering = Operator(space, sp.csr_matrix((space.dimension, space.dimension)))
        if "ge" in jc_transitions:
            lowering = lowering + (1 / math.sqrt(2)) * embed(transition(q, "e", "g"), space, 0)
        if "ef" in jc_transitions:
            lowering = lowering + embed(transition(q, "f", "e"), space, 0)
        coupling = lowering @ a
        H = H + params.chi * (coupling + coupling.dag())
    return H


def dispersive_hamiltonian(params: DetectorParams, space: CompositeSpace, frame: str = "rotating") -> Operator:
    """Detector qubit dispersively coupled to its cavity, on (qubit, cavity).

    The rotating frame removes ω_c and the dressed qubit energy Ω_e + χ_p²/Δ,
    leaving ``(χ_p²/Δ)|e⟩⟨e| a†a``.
    """
    _require_layout(space, ("qubit", "boson"), "dispersive_hamiltonian")
    if params.Delta == 0:
        raise ValueError("Delta = 0: dispersive Hamiltonian diverges")
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}")
    q, c = space.subsystems
    s = params.dispersive_shift
    Pe = embed(projector(q, "e"), space, 0)
    n = embed(number(c.truncation), space, 1)
    H = s * (Pe @ n)
    if frame == "lab":
        H = H + params.omega_c * n + (params.Omega_e + s) * Pe
    return H


_TRANSITIONS = {"ge": (0, 1), "ef": (1, 2)}


def pulse_matrix(transition_name: str, angle: float, phase: float = PULSE_PHASE, dim: int = 3) -> np.ndarray:
    """Local rotation ``exp(−i θ/2 (cos φ σx + sin φ σy))`` on one two-level transition.

    ``σy = i|low⟩⟨up| − i|up⟩⟨low|``, so the default phase maps the lower
    level to ``cos(θ/2)|low⟩ + sin(θ/2)|up⟩``.  Other levels are untouched.
    """
    if transition_name not in _TRANSITIONS:
        raise ValueError(f"transition must be one of {tuple(_TRANSITIONS)}")
    lo, up = _TRANSITIONS[transition_name]
    if up >= dim:
        raise ValueError(f"transition {transition_name} needs at least {up + 1} levels")
    if not math.isfinite(angle):
        raise ValueError("pulse angle must be finite")
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    U = np.eye(dim, dtype=complex)
    U[lo, lo] = U[up, up] = c
    # −i s (cos φ σx + sin φ σy): the (low, up) element is −i s (cos φ + i sin φ)
    U[lo, up] = -1j * s * np.exp(1j * phase)
    U[up, lo] = -1j * s * np.exp(-1j * phase)
    return U


def pulse_unitary(
    transition_name: str,
    angle: float,
    phase: float = PULSE_PHASE,
    space: Optional[CompositeSpace] = None,
    index: int = 0,
) -> Operator:
    """Instantaneous pulse on subsystem ``index`` of ``space`` (a lone qutrit by default)."""
    if space is None:
        from .hilbert import qutrit

        space = space_of(qutrit())
    spec = space.subsystems[space.check_index(index)]
    if spec.kind == "boson":
        raise ValueError("pulses act on qubit or qutrit subsystems")
    return embed(pulse_matrix(transition_name, angle, phase, spec.dim), space, index)


def beam_splitter_matrix(truncation: int) -> np.ndarray:
    """``exp{(π/4)(a_A† a_B − a_A a_B†)}`` on two modes of equal truncation (A first)."""
    a = annihilation(truncation).dense()
    eye = np.eye(truncation + 1)
    aA, aB = np.kron(a, eye), np.kron(eye, a)
    gen = (math.pi / 4) * (aA.conj().T @ aB - aA @ aB.conj().T)
    return scipy.linalg.expm(gen)


def beam_splitter_unitary(space: CompositeSpace, modes: tuple[int, int] = (0, 1)) -> Operator:
    """50:50 beam splitter on two bosonic factors of ``space``.

    Convention: a photon entering mode A leaves as ``(|1,0⟩ − |0,1⟩)/√2`` and
    one entering mode B as ``(|1,0⟩ + |0,1⟩)/√2``; ``|1,1⟩`` maps to
    ``(|2,0⟩ − |0,2⟩)/√2``.
    """
    i, j = (space.check_index(k) for k in modes)
    si, sj = space.subsystems[i], space.subsystems[j]
    if si.kind != "boson" or sj.kind != "boson":
        raise ValueError("beam splitter acts on bosonic modes")
    if si.truncation != sj.truncation:
        raise ValueError("beam splitter modes must have equal truncation")
    U = beam_splitter_matrix(si.truncation)
    if len(space) == 2 and (i, j) == (0, 1):
        return Operator(space, U)
    return Operator(space, _embed_pair(U, space, i, j))


def _embed_pair(U: np.ndarray, space: CompositeSpace, i: int, j: int) -> np.ndarray:
    dims = space.dims
    n = len(dims)
    rest = [k for k in range(n) if k not in (i, j)]
    d_rest = int(np.prod([dims[k] for k in rest])) if rest else 1
    full = np.kron(U, np.eye(d_rest))
    perm = [i, j] + rest
    shape = [dims[k] for k in perm]
    t = full.reshape(shape + shape)
    inv = list(np.argsort(perm))
    t = t.transpose(inv + [n + k for k in inv])
    return t.reshape(space.dimension, space.dimension)


# ---------------------------------------------------------------------------
# Transmon spectrum


class ConvergenceError(RuntimeError):
    pass


def _charge_hamiltonian(params: TransmonParams, cutoff: int):
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    H = np.diag(4 * params.E_C * (n - params.n_g) ** 2)
    off = np.full(2 * cutoff, -params.E_J / 2)
    H += np.diag(off, 1) + np.diag(off, -1)
    return H, n


def _lowest_levels(params: TransmonParams, cutoff: int):
    H, n = _charge_hamiltonian(params, cutoff)
    w, v = scipy.linalg.eigh(H)
    return w[:3], v[:, :3], n


def transmon_levels(params: TransmonParams) -> dict:
    """Lowest three levels, charge matrix elements and the cavity Rabi rate.

    Returns ``Omega`` (three eigenvalues), ``n_matrix`` (3×3, ⟨j|n̂|k⟩ with
    eigenvector signs fixed so that ⟨g|n̂|e⟩ and ⟨e|n̂|f⟩ are non-negative
    reals) and ``chi = 8 E_C η |⟨f|n̂|e⟩|``.
    """
    w, v, n = _lowest_levels(params, params.charge_cutoff)
    w_more, _, _ = _lowest_levels(params, params.charge_cutoff + 5)
    shift = float(np.max(np.abs(w_more - w)) / params.E_C)
    if shift > 1e-8:
        raise ConvergenceError(
            f"charge cutoff {params.charge_cutoff} not converged (relative shift {shift:.2e})"
        )
    nm = v.T @ (n[:, None] * v)
    # fix eigenvector signs along the ladder
    if nm[0, 1] < 0:
        v[:, 1] *= -1
    nm = v.T @ (n[:, None] * v)
    if nm[1, 2] < 0:
        v[:, 2] *= -1
    nm = v.T @ (n[:, None] * v)
    return {
        "Omega": w.copy(),
        "n_matrix": nm,
        "chi": 8 * params.E_C * params.eta * abs(nm[2, 1]),
        "convergence_shift": shift,
    }


def site_params_from_transmon(
    transmon: TransmonParams,
    omega_c: float,
    omega_m: float,
    lambda_e: float,
    lambda_g: float = 0.0,
    lambda_f: float = 0.0,
    frame: str = "rotating",
) -> SiteParams:
    lv = transmon_levels(transmon)
    Om = lv["Omega"] - lv["Omega"][0]
    return SiteParams(
        omega_c=omega_c,
        omega_m=omega_m,
        Omega_g=float(Om[0]),
        Omega_e=float(Om[1]),
        Omega_f=float(Om[2]),
        lambda_g=lambda_g,
        lambda_e=lambda_e,
        lambda_f=lambda_f,
        chi=float(lv["chi"]),
        frame=frame,
    )
