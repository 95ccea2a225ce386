import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heralded_ecs import entanglement as en
from heralded_ecs import hilbert as h
from conftest import random_density, random_unitary

YY = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


def brute_concurrence(rho):
    """Square roots of the (non-Hermitian) eigenvalues of ρ ρ̃, in decreasing order."""
    ev = np.linalg.eigvals(rho @ YY @ rho.conj() @ YY)
    s = np.sort(np.sqrt(np.abs(ev.real)))[::-1]
    return max(0.0, s[0] - s[1] - s[2] - s[3])


def bell():
    v = np.array([0, 1, 1, 0]) / math.sqrt(2)
    return np.outer(v, v)


def werner(p):
    return p * bell() + (1 - p) * np.eye(4) / 4


@pytest.mark.parametrize("rho,value", [(bell(), 1.0), (np.eye(4) / 4, 0.0), (werner(0.6), 0.4)])
def test_closed_forms(rho, value):
    assert abs(en.concurrence(rho) - value) < 1e-8
    assert abs(brute_concurrence(rho) - value) < 1e-8


def test_local_unitary_invariance(rng):
    rho = werner(0.8)
    base = en.concurrence(rho)
    for _ in range(100):
        U = np.kron(random_unitary(2, rng), random_unitary(2, rng))
        assert abs(en.concurrence(U @ rho @ U.conj().T) - base) < 1e-8


@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_matches_brute_force_on_random_states(seed, rank):
    rho = random_density(4, np.random.default_rng(seed), rank)
    c = en.concurrence(rho)
    assert 0 <= c <= 1
    assert abs(c - brute_concurrence(rho)) < 1e-6


@given(st.integers(0, 2**31 - 1))
def test_pure_state_formula(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    v /= np.linalg.norm(v)
    assert abs(en.concurrence(np.outer(v, v.conj())) - 2 * abs(v[0] * v[3] - v[1] * v[2])) < 1e-7


def test_rejects_non_psd():
    with pytest.raises(ValueError):
        en.concurrence(np.diag([1.5, -0.5, 0, 0]))


def test_offdiagonal_shortcut_and_fallback():
    rho = bell()
    assert math.isclose(en.concurrence_from_offdiagonal(rho[1, 2], rho), 1.0)
    leaky = werner(0.6)
    assert abs(en.concurrence_from_offdiagonal(leaky[1, 2], leaky) - 0.4) < 1e-8


def test_negativity_bell_and_product():
    space = h.space_of(h.qubit(), h.qubit())
    assert abs(en.negativity(h.DensityOperator(space, bell()), ({0}, {1})) - 0.5) < 1e-12
    assert abs(en.negativity(h.DensityOperator(space, np.eye(4) / 4), ({0}, {1}))) < 1e-12
    with pytest.raises(ValueError):
        en.negativity(h.DensityOperator(space, bell()), ({0}, {0}))


@pytest.mark.parametrize("alpha,sign", [(0.3, 1), (0.3, -1), (1.5, 1)])
def test_entangled_coherent_state_norm(alpha, sign):
    T = 30
    plus, minus = h.coherent_amplitudes(alpha, T), h.coherent_amplitudes(-alpha, T)
    raw = np.kron(minus, plus) + sign * np.kron(plus, minus)
    assert abs(np.linalg.norm(raw) - en.ecs_norm(alpha, sign)) < 1e-10
    psi = en.entangled_coherent_state(alpha, sign, T)
    assert abs(psi.norm() - 1) < 1e-12
    assert en.negativity(psi, ({0}, {1})) > 0


def test_antisymmetric_ecs_at_zero_raises():
    with pytest.raises(ValueError):
        en.entangled_coherent_state(0.0, -1, 5)


def test_two_qubit_state_ordering(rng):
    space = h.space_of(h.qubit(), h.boson(1), h.qubit())
    A = random_density(4, rng)
    rho = np.kron(A, np.eye(2) / 2)
    # layout (q0, q1, boson) moved to (q0, boson, q1)
    full = rho.reshape(2, 2, 2, 2, 2, 2).transpose(0, 2, 1, 3, 5, 4).reshape(8, 8)
    red = en.two_qubit_state(h.DensityOperator(space, full), (0, 2))
    assert np.allclose(red, A)


def test_fidelity_pure_and_mixed():
    psi = en.entangled_coherent_state(0.5, 1, 12)
    assert math.isclose(en.fidelity(psi, psi), 1.0)
    assert math.isclose(en.fidelity(psi.density(), psi), 1.0)
