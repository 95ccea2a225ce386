"""Entanglement measures and entangled-coherent-state targets.

Two-qubit states use the basis order gg, ge, eg, ee.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .hilbert import (
    CompositeSpace,
    DensityOperator,
    PureState,
    boson,
    coherent_amplitudes,
    space_of,
)

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
YY = np.kron(SIGMA_Y, SIGMA_Y)
PSD_SLACK = 1e-7


@dataclass(frozen=True)
class ConcurrenceResult:
    value: float
    raw: float


def _as_matrix(rho) -> np.ndarray:
    M = rho.dense() if hasattr(rho, "dense") else np.asarray(rho, dtype=complex)
    if M.shape != (4, 4):
        raise ValueError("two-qubit state must be 4x4")
    return M


def _psd_sqrt(M):
    w, V = la.eigh(M)
    if w.min() < -PSD_SLACK:
        raise ValueError(f"state is not positive semidefinite (min eigenvalue {w.min():.2e})")
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def concurrence_details(rho) -> ConcurrenceResult:
    M = _as_matrix(rho)
    M = 0.5 * (M + M.conj().T)
    R = _psd_sqrt(M)
    tilde = YY @ M.conj() @ YY
    lam = la.eigvalsh(R @ tilde @ R)
    s = np.sqrt(np.clip(lam, 0, None))[::-1]
    raw = float(s[0] - s[1] - s[2] - s[3])
    return ConcurrenceResult(min(1.0, max(0.0, raw)), raw)


def concurrence(rho) -> float:
    """Wootters concurrence, clamped to [0, 1]."""
    return concurrence_details(rho).value


LEAKAGE_LIMIT = 1e-6


def concurrence_from_offdiagonal(block_trace: complex, rho=None) -> float:
    """``2|Tr ρ_{ge,eg}|``.

    When the two-qubit state is supplied, the shortcut is only used if the
    gg/ee populations and the coherences touching them are below
    ``LEAKAGE_LIMIT``; otherwise the full Wootters value is returned.
    """
    if rho is not None:
        M = _as_matrix(rho)
        outside = max(abs(M[0, 0]), abs(M[3, 3]), abs(M[0, 3]))
        if outside > LEAKAGE_LIMIT:
            return concurrence(M)
    return 2 * abs(block_trace)


def two_qubit_state(rho: DensityOperator, qubits: tuple[int, int]) -> np.ndarray:
    """Reduced 4x4 state of two qubit-like subsystems (levels g, e only)."""
    from .hilbert import partial_trace

    red = partial_trace(rho, set(qubits)).dense()
    dims = [rho.space.subsystems[i].dim for i in sorted(qubits)]
    red = red.reshape(dims + dims)
    if list(qubits) != sorted(qubits):
        red = red.transpose(1, 0, 3, 2)
        dims = dims[::-1]
    sub = red[:2, :2, :2, :2].reshape(4, 4)
    return sub


def entangled_coherent_state(alpha: complex, sign: int, truncation: int) -> PureState:
    """Normalized ``|−α⟩|α⟩ ± |α⟩|−α⟩`` on two modes."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if sign == -1 and alpha == 0:
        raise ValueError("the antisymmetric state vanishes at alpha = 0")
    plus = coherent_amplitudes(alpha, truncation)
    minus = coherent_amplitudes(-alpha, truncation)
    vec = np.kron(minus, plus) + sign * np.kron(plus, minus)
    space = space_of(boson(truncation), boson(truncation))
    return PureState(space, vec / np.linalg.norm(vec))


def ecs_norm(alpha: complex, sign: int) -> float:
    """Norm of the unnormalized state, ``√(2(1 ± e^{−4|α|²}))``."""
    return math.sqrt(2 * (1 + sign * math.exp(-4 * abs(alpha) ** 2)))


def partial_transpose(rho, bipartition) -> np.ndarray:
    space: CompositeSpace = rho.space
    n = len(space)
    part_b = sorted(bipartition[1])
    dims = space.dims
    M = rho.dense().reshape(dims + dims)
    perm = list(range(2 * n))
    for i in part_b:
        perm[i], perm[n + i] = perm[n + i], perm[i]
    return M.transpose(perm).reshape(space.dimension, space.dimension)


def negativity(rho, bipartition) -> float:
    """``(‖ρ^{T_B}‖₁ − 1)/2`` for ``bipartition = (A indices, B indices)``."""
    a, b = set(bipartition[0]), set(bipartition[1])
    n = len(rho.space)
    if not a or not b or a & b or (a | b) != set(range(n)):
        raise ValueError("bipartition must split all subsystems into two non-empty parts")
    if isinstance(rho, PureState):
        rho = DensityOperator.from_pure(rho)
    PT = partial_transpose(rho, (sorted(a), sorted(b)))
    w = la.eigvalsh(0.5 * (PT + PT.conj().T))
    return float((np.abs(w).sum() - 1) / 2)


def fidelity(rho, target: PureState) -> float:
    if rho.space != target.space:
        raise ValueError("state and target live on different spaces")
    v = target.amplitudes
    if isinstance(rho, PureState):
        return float(abs(np.vdot(v, rho.amplitudes)) ** 2)
    return float(np.real(np.vdot(v, rho.dense() @ v)))
