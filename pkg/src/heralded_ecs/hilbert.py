"""Truncated tensor-product Hilbert spaces and operators on them.

Level ordering is fixed: qubits are ``(g, e)``, qutrits ``(g, e, f)`` and
bosonic modes are Fock states ``0..truncation``.  Composite spaces order
their factors left to right, matching ``numpy.kron``.

Position and momentum follow ``x = (b + b†)/√2``, ``p = i(b† − b)/√2`` so
that ``[x, p] = i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

SUBSYSTEM_KINDS = ("qubit", "qutrit", "boson")
LEVELS = {"g": 0, "e": 1, "f": 2}


@dataclass(frozen=True)
class SubsystemSpec:
    kind: str
    truncation: int = 1

    def __post_init__(self):
        if self.kind not in SUBSYSTEM_KINDS:
            raise ValueError(f"unknown subsystem kind {self.kind!r}")
        if self.kind == "boson" and self.truncation < 1:
            raise ValueError("bosonic truncation must be >= 1")

    @property
    def dim(self) -> int:
        if self.kind == "qubit":
            return 2
        if self.kind == "qutrit":
            return 3
        return self.truncation + 1


def qubit() -> SubsystemSpec:
    return SubsystemSpec("qubit")


def qutrit() -> SubsystemSpec:
    return SubsystemSpec("qutrit")


def boson(truncation: int) -> SubsystemSpec:
    return SubsystemSpec("boson", int(truncation))


@dataclass(frozen=True)
class CompositeSpace:
    subsystems: tuple

    def __init__(self, subsystems: Iterable[SubsystemSpec]):
        subs = tuple(subsystems)
        if not subs:
            raise ValueError("a composite space needs at least one subsystem")
        for s in subs:
            if not isinstance(s, SubsystemSpec):
                raise TypeError(f"expected SubsystemSpec, got {type(s).__name__}")
        object.__setattr__(self, "subsystems", subs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.subsystems)

    def check_index(self, index: int) -> int:
        if not 0 <= index < len(self.subsystems):
            raise ValueError(f"subsystem index {index} out of range for {len(self)} factors")
        return index

    def __add__(self, other: "CompositeSpace") -> "CompositeSpace":
        return CompositeSpace(self.subsystems + other.subsystems)


def space_of(*subsystems: SubsystemSpec) -> CompositeSpace:
    return CompositeSpace(subsystems)


def _as_matrix(matrix):
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix, dtype=complex)
    return np.asarray(matrix, dtype=complex)


class Operator:
    """A complex square matrix bound to a :class:`CompositeSpace`.

    Storage may be sparse (CSR) or dense.  Binary operations require both
    operands to live on the same space.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: CompositeSpace, matrix):
        m = _as_matrix(matrix)
        d = space.dimension
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {d}")
        self.space = space
        self.matrix = m

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise ValueError("operators live on different spaces")

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    def sparse(self) -> sp.csr_matrix:
        return self.matrix if self.is_sparse else sp.csr_matrix(self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, PureState):
            if other.space != self.space:
                raise ValueError("operator and state live on different spaces")
            return PureState(self.space, self.matrix @ other.amplitudes)
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def commutator(self, other: "Operator") -> "Operator":
        return self @ other - other @ self

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_error() <= tol

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"Operator(dims={self.space.dims}, {kind})"


class DensityOperator(Operator):
    """Dense density matrix; :meth:`validate` enforces the physical invariants."""

    __slots__ = ()

    def __init__(self, space: CompositeSpace, matrix):
        m = matrix.toarray() if sp.issparse(matrix) else matrix
        super().__init__(space, m)

    @classmethod
    def from_pure(cls, state: "PureState") -> "DensityOperator":
        v = state.amplitudes
        return cls(state.space, np.outer(v, v.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def normalized(self) -> "DensityOperator":
        tr = self.trace().real
        if tr <= 0:
            raise ValueError("cannot normalize a density operator with non-positive trace")
        return DensityOperator(self.space, self.matrix / tr)

    def validate(self, trace_tol=1e-9, herm_tol=1e-9, psd_tol=1e-7) -> "DensityOperator":
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"trace {self.trace():.3e} differs from 1")
        if self.hermiticity_error() > herm_tol:
            raise ValueError("density operator is not Hermitian")
        if self.min_eigenvalue() < -psd_tol:
            raise ValueError("density operator has a negative eigenvalue")
        return self


@dataclass(frozen=True, eq=False)
class PureState:
    space: CompositeSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.size != self.space.dimension:
            raise ValueError("amplitude vector does not match space dimension")
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.space, self.amplitudes / n)

    def density(self) -> DensityOperator:
        return DensityOperator.from_pure(self)

    def overlap(self, other: "PureState") -> complex:
        if other.space != self.space:
            raise ValueError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __mul__(self, scalar) -> "PureState":
        return PureState(self.space, self.amplitudes * complex(scalar))

    __rmul__ = __mul__

    def __add__(self, other: "PureState") -> "PureState":
        if other.space != self.space:
            raise ValueError("states live on different spaces")
        return PureState(self.space, self.amplitudes + other.amplitudes)

    def __sub__(self, other: "PureState") -> "PureState":
        return self + (-1) * other


# ---------------------------------------------------------------------------
# Single-subsystem operators


def annihilation(truncation: int) -> Operator:
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    n = np.arange(1, truncation + 1)
    mat = sp.diags(np.sqrt(n), offsets=1, shape=(truncation + 1, truncation + 1), format="csr")
    return Operator(space_of(boson(truncation)), mat)


def creation(truncation: int) -> Operator:
    return annihilation(truncation).dag()


def number(truncation: int) -> Operator:
    n = np.arange(truncation + 1, dtype=float)
    return Operator(space_of(boson(truncation)), sp.diags(n, format="csr"))


def position(truncation: int) -> Operator:
    a = annihilation(truncation)
    return (a + a.dag()) * (1 / math.sqrt(2))


def momentum(truncation: int) -> Operator:
    a = annihilation(truncation)
    return (a.dag() - a) * (1j / math.sqrt(2))


def identity(space: CompositeSpace) -> Operator:
    return Operator(space, sp.identity(space.dimension, dtype=complex, format="csr"))


def transition(spec: SubsystemSpec, j, k) -> Operator:
    """``|j⟩⟨k|`` on a single subsystem; levels may be given as ``"g"``/``"e"``/``"f"``."""
    j = LEVELS.get(j, j)
    k = LEVELS.get(k, k)
    d = spec.dim
    if not (0 <= j < d and 0 <= k < d):
        raise ValueError(f"levels ({j}, {k}) out of range for dimension {d}")
    mat = sp.csr_matrix(([1.0 + 0j], ([j], [k])), shape=(d, d))
    return Operator(space_of(spec), mat)


def projector(spec: SubsystemSpec, j) -> Operator:
    return transition(spec, j, j)


def embed(op, space: CompositeSpace, index: int) -> Operator:
    """Place a single-subsystem operator at ``index`` with identities elsewhere."""
    space.check_index(index)
    target = space.subsystems[index]
    mat = op.matrix if isinstance(op, Operator) else _as_matrix(op)
    if mat.shape != (target.dim, target.dim):
        raise ValueError(
            f"operator of shape {mat.shape} does not fit subsystem {index} (dim {target.dim})"
        )
    dims = space.dims
    left = int(np.prod(dims[:index]))
    right = int(np.prod(dims[index + 1:]))
    out = sp.csr_matrix(mat)
    if left > 1:
        out = sp.kron(sp.identity(left, format="csr"), out, format="csr")
    if right > 1:
        out = sp.kron(out, sp.identity(right, format="csr"), format="csr")
    return Operator(space, out)


def tensor(*ops: Operator) -> Operator:
    space = CompositeSpace(s for op in ops for s in op.space.subsystems)
    if all(op.is_sparse for op in ops):
        mat = ops[0].matrix
        for op in ops[1:]:
            mat = sp.kron(mat, op.matrix, format="csr")
    else:
        mat = ops[0].dense()
        for op in ops[1:]:
            mat = np.kron(mat, op.dense())
    return Operator(space, mat)


def tensor_states(*states: PureState) -> PureState:
    space = CompositeSpace(s for st in states for s in st.space.subsystems)
    v = states[0].amplitudes
    for st in states[1:]:
        v = np.kron(v, st.amplitudes)
    return PureState(space, v)


def basis_state(space: CompositeSpace, levels: Sequence) -> PureState:
    """Product basis ket; qubit/qutrit levels may be letters, boson levels integers."""
    if len(levels) != len(space):
        raise ValueError("one level per subsystem is required")
    idx = []
    for spec, lvl in zip(space.subsystems, levels):
        i = LEVELS[lvl] if isinstance(lvl, str) else int(lvl)
        if not 0 <= i < spec.dim:
            raise ValueError(f"level {lvl!r} out of range for {spec}")
        idx.append(i)
    v = np.zeros(space.dimension, dtype=complex)
    v[np.ravel_multi_index(idx, space.dims)] = 1.0
    return PureState(space, v)


# ---------------------------------------------------------------------------
# Reduced states and expectations


def _kept(keep, n: int) -> list[int]:
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    for k in keep:
        if not 0 <= k < n:
            raise ValueError(f"subsystem index {k} out of range")
    return keep


def partial_trace(rho, keep) -> DensityOperator:
    """Reduced state on the subsystems in ``keep`` (kept in ascending order).

    Accepts a :class:`DensityOperator` or a :class:`PureState`; the latter is
    contracted directly without forming the full density matrix.
    """
    space = rho.space
    keep = _kept(keep, len(space))
    dims = space.dims
    rest = [i for i in range(len(dims)) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep]))
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    sub = CompositeSpace(space.subsystems[i] for i in keep)
    if isinstance(rho, PureState):
        psi = rho.amplitudes.reshape(dims).transpose(keep + rest).reshape(dk, dr)
        return DensityOperator(sub, psi @ psi.conj().T)
    n = len(dims)
    t = rho.dense().reshape(dims + dims)
    perm = keep + rest + [n + i for i in keep] + [n + i for i in rest]
    t = t.transpose(perm).reshape(dk, dr, dk, dr)
    return DensityOperator(sub, np.einsum("ajbj->ab", t))


def expectation(rho, op: Operator) -> complex:
    if rho.space != op.space:
        raise ValueError("state and operator live on different spaces")
    if isinstance(rho, PureState):
        v = rho.amplitudes
        return complex(np.vdot(v, op.matrix @ v))
    if op.is_sparse:
        return complex((op.matrix.T.multiply(rho.matrix)).sum())
    return complex(np.einsum("ij,ji->", rho.matrix, op.matrix))


# ---------------------------------------------------------------------------
# Bosonic states


def default_truncation(alpha_max: float) -> int:
    """Fock cutoff ``ceil(6 + 8|α|²)`` used when none is given."""
    return int(math.ceil(6 + 8 * abs(alpha_max) ** 2))


def thermal_cutoff(n_bar: float, tail: float = 1e-4, minimum: int = 20, alpha_max: float = 0.0) -> int:
    """Cutoff leaving less than ``tail`` of a thermal state above it, plus room for displacement ``alpha_max``."""
    if not 0 < tail < 1:
        raise ValueError("tail must lie in (0, 1)")
    base = 0
    if n_bar > 0:
        # weight above level N is (n/(n+1))^(N+1)
        base = int(math.ceil(math.log(tail) / math.log(n_bar / (n_bar + 1)))) - 1
    return max(minimum, base + int(math.ceil(8 * abs(alpha_max) ** 2)))


def displacement(alpha: complex, truncation: int) -> Operator:
    """``exp(α b† − α* b)`` on the truncated Fock space (Padé scaling and squaring)."""
    a = annihilation(truncation).dense()
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return Operator(space_of(boson(truncation)), scipy.linalg.expm(gen))


def displacement_truncation_error(alpha: complex, truncation: int) -> float:
    """Max deviation of ``D(α)|0⟩`` from the exact coherent amplitudes."""
    col = displacement(alpha, truncation).dense()[:, 0]
    return float(np.max(np.abs(col - coherent_amplitudes(alpha, truncation))))


def coherent_amplitudes(alpha: complex, truncation: int) -> np.ndarray:
    n = np.arange(truncation + 1)
    if alpha == 0:
        return (n == 0).astype(complex)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact)
    return mag * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, truncation: int) -> PureState:
    d = displacement(alpha, truncation)
    vac = basis_state(d.space, [0])
    return (d @ vac).normalized()


def thermal_state(n_bar: float, truncation: int) -> DensityOperator:
    n = np.arange(truncation + 1)
    if n_bar == 0:
        p = (n == 0).astype(float)
    else:
        p = (n_bar / (n_bar + 1)) ** n
        p = p / p.sum()
    return DensityOperator(space_of(boson(truncation)), np.diag(p).astype(complex))


def apply_local(matrix, state: PureState, indices: Sequence[int]) -> PureState:
    """Apply an operator acting on the listed subsystems (in that order) to ``state``.

    ``matrix`` has dimension equal to the product of the listed subsystem
    dimensions.  The full-space operator is never formed.
    """
    dims = state.space.dims
    idx = [state.space.check_index(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise ValueError("subsystem indices must be distinct")
    d_loc = int(np.prod([dims[i] for i in idx]))
    m = matrix.matrix if isinstance(matrix, Operator) else matrix
    if m.shape != (d_loc, d_loc):
        raise ValueError("local operator dimension does not match the listed subsystems")
    rest = [i for i in range(len(dims)) if i not in idx]
    perm = idx + rest
    psi = state.amplitudes.reshape(dims).transpose(perm).reshape(d_loc, -1)
    psi = m @ psi
    psi = np.asarray(psi).reshape([dims[i] for i in perm]).transpose(np.argsort(perm))
    return PureState(state.space, psi.reshape(-1))


def project(state: PureState, index: int, level) -> PureState:
    """Unnormalized projection of subsystem ``index`` onto basis level ``level``."""
    spec = state.space.subsystems[state.space.check_index(index)]
    return apply_local(projector(spec, level).dense(), state, [index])
