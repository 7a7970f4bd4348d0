"""Dense polarization-state engine.

Photon ``k`` of an ``N``-photon state is the ``k``-th most significant bit of
the amplitude index; bit value 0 is ``H`` and 1 is ``V``.  All values are
immutable; every operation returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

MAX_PHOTONS = 20
NORM_ATOL = 1e-12
SPECTRAL_ATOL = 1e-10

_BIT = {"H": 0, "V": 1, "0": 0, "1": 1}


class StateError(ValueError):
    """Raised for malformed states or invalid photon addressing."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


def _check_size(num_photons: int) -> None:
    if num_photons > MAX_PHOTONS:
        raise StateError(
            f"{num_photons} photons exceeds the dense-state cap of {MAX_PHOTONS}"
        )


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over ``num_photons`` polarization qubits."""

    amplitudes: np.ndarray
    lost: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if n < 0 or 2**n != amps.size:
            raise StateError(f"amplitude vector length {amps.size} is not a power of 2")
        _check_size(n)
        lost = tuple(bool(x) for x in self.lost) if self.lost else (False,) * n
        if len(lost) != n:
            raise StateError("lost flags must have one entry per photon")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "lost", lost)

    @property
    def num_photons(self) -> int:
        return len(self.lost)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_photons)

    def with_lost(self, photon: int, lost: bool = True) -> "PureState":
        flags = list(self.lost)
        flags[photon] = lost
        return PureState(self.amplitudes, tuple(flags))

    def to_density(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()))

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[_index(bits)])


def _index(bits: str) -> int:
    idx = 0
    for ch in bits:
        idx = (idx << 1) | _BIT[ch]
    return idx


def normalized(vec: np.ndarray, lost: Sequence[bool] = ()) -> PureState:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(vec)
    if nrm < NORM_ATOL:
        raise StateError("cannot normalize a zero vector")
    return PureState(vec / nrm, tuple(lost))


def basis_state(bits: str) -> PureState:
    """Product ket such as ``"HVH"``."""
    _check_size(len(bits))
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[_index(bits)] = 1.0
    return PureState(vec)


def make_state(terms: Iterable[tuple[str, complex]]) -> PureState:
    """Build a normalized state from ``(bitstring, amplitude)`` terms.

    Bitstrings use ``H``/``V`` (or ``0``/``1``).  Repeated bitstrings add.
    """
    terms = list(terms)
    if not terms:
        raise StateError("at least one term is required")
    length = len(terms[0][0])
    if length == 0 or any(len(bits) != length for bits, _ in terms):
        raise StateError("all bitstrings must have the same nonzero length")
    _check_size(length)
    vec = np.zeros(2**length, dtype=complex)
    for bits, amp in terms:
        try:
            vec[_index(bits)] += complex(amp)
        except KeyError as exc:
            raise StateError(f"bad polarization symbol in {bits!r}") from exc
    return normalized(vec)


def tensor(a: PureState, b: PureState) -> PureState:
    _check_size(a.num_photons + b.num_photons)
    return PureState(np.kron(a.amplitudes, b.amplitudes), a.lost + b.lost)


def tensor_all(states: Sequence[PureState]) -> PureState:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def permute(state: PureState, order: Sequence[int]) -> PureState:
    """Reorder photons: photon ``k`` of the result is photon ``order[k]`` of ``state``."""
    if sorted(order) != list(range(state.num_photons)):
        raise StateError(f"{order} is not a permutation of the photons")
    t = np.transpose(state.tensor_view(), order)
    return PureState(t.reshape(-1), tuple(state.lost[k] for k in order))


class Pauli(Enum):
    I = "I"
    X = "X"
    Z = "Z"
    XZ = "XZ"


PAULI_MATRICES = {
    Pauli.I: np.eye(2, dtype=complex),
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}
# operator product X.Z: Z acts first
PAULI_MATRICES[Pauli.XZ] = PAULI_MATRICES[Pauli.X] @ PAULI_MATRICES[Pauli.Z]


@dataclass(frozen=True)
class PauliOp:
    kind: Pauli
    target_photon: int

    def __str__(self):
        return f"{self.kind.value}@{self.target_photon}"


def _check_photon(state: PureState, k: int, *, allow_lost: bool = False) -> None:
    if not 0 <= k < state.num_photons:
        raise StateError(f"photon index {k} out of range for {state.num_photons} photons")
    if state.lost[k] and not allow_lost:
        raise StateError(f"photon {k} is lost")


def apply_single(state: PureState, matrix: np.ndarray, target: int) -> PureState:
    _check_photon(state, target)
    t = np.tensordot(matrix, state.tensor_view(), axes=([1], [target]))
    t = np.moveaxis(t, 0, target)
    return PureState(t.reshape(-1), state.lost)


def apply_pauli(state: PureState, op: PauliOp) -> PureState:
    return apply_single(state, PAULI_MATRICES[op.kind], op.target_photon)


def apply_paulis(state: PureState, ops: Iterable[PauliOp]) -> PureState:
    for op in ops:
        state = apply_pauli(state, op)
    return state


def _check_orthonormal(kets: np.ndarray) -> None:
    gram = kets.conj() @ kets.T
    if np.max(np.abs(gram - np.eye(len(kets)))) > SPECTRAL_ATOL:
        raise StateError("projector kets are not orthonormal")


def _as_kets(projector_basis: Sequence) -> np.ndarray:
    kets = np.array(
        [k.amplitudes if isinstance(k, PureState) else np.asarray(k, dtype=complex)
         for k in projector_basis],
        dtype=complex,
    )
    if kets.ndim != 2 or kets.shape[1] != 4 or not 1 <= len(kets) <= 4:
        raise StateError("projector basis must hold 1 to 4 two-photon kets")
    _check_orthonormal(kets)
    return kets


def _contract_pair(state: PureState, i: int, j: int, ket: np.ndarray) -> np.ndarray:
    """Unnormalized remainder after applying <ket| to photons ``i, j``."""
    bra = ket.conj().reshape(2, 2)
    return np.tensordot(bra, state.tensor_view(), axes=([0, 1], [i, j])).reshape(-1)


def _remaining_lost(state: PureState, i: int, j: int) -> tuple[bool, ...]:
    return tuple(f for k, f in enumerate(state.lost) if k not in (i, j))


def enumerate_two_photon(
    state: PureState, i: int, j: int, projector_basis: Sequence
) -> list[tuple[int, float, PureState | None]]:
    """Every outcome of a two-photon projective measurement with its Born weight.

    Outcome ``len(projector_basis)`` is the complement of the given kets and
    is present only when they do not span the pair space; its post state is
    ``None`` because it is generally mixed.  Zero-probability outcomes carry
    ``None`` as well.
    """
    if i == j:
        raise StateError("a two-photon measurement needs two distinct photons")
    _check_photon(state, i)
    _check_photon(state, j)
    kets = _as_kets(projector_basis)
    lost = _remaining_lost(state, i, j)
    out = []
    total = 0.0
    for idx, ket in enumerate(kets):
        rem = _contract_pair(state, i, j, ket)
        prob = float(np.vdot(rem, rem).real)
        total += prob
        post = normalized(rem, lost) if prob > 1e-15 else None
        out.append((idx, prob, post))
    if len(kets) < 4:
        out.append((len(kets), max(0.0, state.norm - total), None))
    return out


def project_two_photon(
    state: PureState, i: int, j: int, projector_basis: Sequence, rng: np.random.Generator
) -> tuple[int, float, PureState | None]:
    """Sample one outcome of :func:`enumerate_two_photon`."""
    branches = enumerate_two_photon(state, i, j, projector_basis)
    probs = np.array([b[1] for b in branches])
    k = int(rng.choice(len(branches), p=probs / probs.sum()))
    return branches[k]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise StateError("density matrix must be square")
        n = int(round(np.log2(mat.shape[0])))
        if 2**n != mat.shape[0]:
            raise StateError("density matrix dimension is not a power of 2")
        object.__setattr__(self, "matrix", mat)
        if self.validate:
            if np.max(np.abs(mat - mat.conj().T)) > SPECTRAL_ATOL:
                raise StateError("density matrix is not Hermitian")
            if abs(np.trace(mat) - 1) > SPECTRAL_ATOL:
                raise StateError(f"density matrix trace {np.trace(mat).real} != 1")
            if np.linalg.eigvalsh(mat).min() < -SPECTRAL_ATOL:
                raise StateError("density matrix has a negative eigenvalue")

    @property
    def num_photons(self) -> int:
        return int(round(np.log2(self.matrix.shape[0])))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    @classmethod
    def mixture(cls, parts: Iterable[tuple[float, "DensityMatrix | PureState"]]) -> "DensityMatrix":
        acc = None
        for w, rho in parts:
            m = as_density(rho).matrix * w
            acc = m if acc is None else acc + m
        if acc is None:
            raise StateError("empty mixture")
        return cls(acc)

    @classmethod
    def maximally_mixed(cls, num_photons: int) -> "DensityMatrix":
        d = 2**num_photons
        return cls(np.eye(d) / d)


def as_density(state: "PureState | DensityMatrix") -> DensityMatrix:
    return state.to_density() if isinstance(state, PureState) else state


def partial_trace(state: "PureState | DensityMatrix", keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on ``keep``, in the order given."""
    keep = list(keep)
    if not keep:
        raise StateError("keep set must be nonempty")
    n = state.num_photons
    if len(set(keep)) != len(keep) or any(not 0 <= k < n for k in keep):
        raise StateError(f"invalid keep set {keep} for {n} photons")
    traced = [k for k in range(n) if k not in keep]
    if isinstance(state, PureState):
        t = np.transpose(state.tensor_view(), keep + traced).reshape(2 ** len(keep), -1)
        return DensityMatrix(t @ t.conj().T)
    t = state.matrix.reshape((2,) * (2 * n))
    t = np.transpose(t, keep + traced + [n + k for k in keep] + [n + k for k in traced])
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    t = t.reshape(dk, dt, dk, dt)
    return DensityMatrix(np.einsum("atbt->ab", t))


def fidelity(rho: "DensityMatrix | PureState", target: PureState) -> float:
    """``<target|rho|target>`` for a pure target."""
    v = target.amplitudes
    if isinstance(rho, PureState):
        if rho.amplitudes.size != v.size:
            raise StateError(f"dimension mismatch: {rho.amplitudes.size} vs {v.size}")
        return float(min(1.0, abs(np.vdot(v, rho.amplitudes)) ** 2))
    if rho.dim != v.size:
        raise StateError(f"dimension mismatch: {rho.dim} vs {v.size}")
    f = complex(np.vdot(v, rho.matrix @ v))
    if abs(f.imag) > SPECTRAL_ATOL:
        raise StateError("fidelity has a non-negligible imaginary part")
    return float(min(1.0, max(0.0, f.real)))
