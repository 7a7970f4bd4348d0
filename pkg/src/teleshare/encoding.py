"""GHZ and parity encodings, logical Bell states and their decompositions.

Two-photon Bell states are always taken in the H/V basis
(``phi± = HH ± VV``, ``psi± = HV ± VH``).  With that convention every
block-level parity Bell state expands into photon pairs sharing the block's
sign, with the block symbol fixed by the parity of ``psi`` labels; see
:func:`decompose_logical_bell`.

A logical Bell state over two qubits of ``N`` photons each is stored in
the order ``(1, ..., N, 1', ..., N')``.  Decompositions refer to the paired
order ``(1, 1', 2, 2', ...)``; :func:`paired_to_qubit_order` is the explicit
permutation between the two.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .qstate import PureState, StateError, normalized, permute


class Scheme(Enum):
    GHZ = "ghz"
    PARITY = "parity"


class Symbol(Enum):
    PHI = "phi"
    PSI = "psi"

    def flipped(self) -> "Symbol":
        return Symbol.PSI if self is Symbol.PHI else Symbol.PHI


class Sign(IntEnum):
    PLUS = 1
    MINUS = -1

    def flipped(self) -> "Sign":
        return Sign(-self)

    @property
    def char(self) -> str:
        return "+" if self is Sign.PLUS else "-"


class Level(Enum):
    PHOTON = 0
    BLOCK = 1
    LOGICAL = 2


@dataclass(frozen=True)
class BellLabel:
    symbol: Symbol
    sign: Sign
    level: Level = Level.PHOTON

    def __str__(self):
        if self.level is Level.LOGICAL:
            return f"{self.symbol.value.capitalize()}{self.sign.char}"
        suffix = "_(p)" if self.level is Level.BLOCK else ""
        return f"{self.symbol.value}{self.sign.char}{suffix}"

    def flipped_sign(self) -> "BellLabel":
        return BellLabel(self.symbol, self.sign.flipped(), self.level)

    def flipped_symbol(self) -> "BellLabel":
        return BellLabel(self.symbol.flipped(), self.sign, self.level)

    def at(self, level: Level) -> "BellLabel":
        return BellLabel(self.symbol, self.sign, level)

    @classmethod
    def parse(cls, text: str) -> "BellLabel":
        """Parse ``"phi-"``, ``"psi+_(p)"`` or ``"Phi+"`` (logical)."""
        body = text.strip()
        level = Level.PHOTON
        if body.endswith("_(p)"):
            body, level = body[:-4], Level.BLOCK
        elif body[:1].isupper():
            level = Level.LOGICAL
        try:
            symbol = Symbol(body[:-1].lower())
            sign = {"+": Sign.PLUS, "-": Sign.MINUS}[body[-1]]
        except (ValueError, KeyError) as exc:
            raise ValueError(f"cannot parse Bell label {text!r}") from exc
        return cls(symbol, sign, level)


def all_labels(level: Level = Level.PHOTON) -> list[BellLabel]:
    return [BellLabel(sy, sg, level) for sy in Symbol for sg in (Sign.PLUS, Sign.MINUS)]


PHI_PLUS = BellLabel(Symbol.PHI, Sign.PLUS)
PHI_MINUS = BellLabel(Symbol.PHI, Sign.MINUS)
PSI_PLUS = BellLabel(Symbol.PSI, Sign.PLUS)
PSI_MINUS = BellLabel(Symbol.PSI, Sign.MINUS)


@dataclass(frozen=True)
class EncodingParams:
    """``n`` blocks of ``p`` photons per logical qubit; ``q`` is the CBM retry threshold."""

    scheme: Scheme
    n: int
    p: int = 1
    q: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be >= 1")
        if self.scheme is Scheme.GHZ and self.p != 1:
            raise ValueError("GHZ encoding has p = 1")
        q = self.p - 1 if self.q is None else self.q
        if not 0 <= q <= self.p - 1:
            raise ValueError(f"q must satisfy 0 <= q <= p-1, got q={q}, p={self.p}")
        object.__setattr__(self, "q", q)

    @property
    def N(self) -> int:
        return self.n * self.p

    @classmethod
    def ghz(cls, n: int) -> "EncodingParams":
        return cls(Scheme.GHZ, n)

    @classmethod
    def parity(cls, n: int, p: int, q: int | None = None) -> "EncodingParams":
        return cls(Scheme.PARITY, n, p, q)


@dataclass(frozen=True)
class SecretSpec:
    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        nrm = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if nrm < 1e-12:
            raise ValueError("secret amplitudes cannot both vanish")
        object.__setattr__(self, "alpha", a / nrm)
        object.__setattr__(self, "beta", b / nrm)

    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


_SQ2 = np.sqrt(0.5)
_KET_H = np.array([1, 0], dtype=complex)
_KET_V = np.array([0, 1], dtype=complex)
_KET_PLUS = (_KET_H + _KET_V) * _SQ2
_KET_MINUS = (_KET_H - _KET_V) * _SQ2


def _kron_power(v: np.ndarray, k: int) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for _ in range(k):
        out = np.kron(out, v)
    return out


@lru_cache(maxsize=None)
def _block_basis(p: int) -> tuple[np.ndarray, np.ndarray]:
    plus_p, minus_p = _kron_power(_KET_PLUS, p), _kron_power(_KET_MINUS, p)
    return (plus_p + minus_p) * _SQ2, (plus_p - minus_p) * _SQ2


def logical_basis(enc: EncodingParams) -> tuple[np.ndarray, np.ndarray]:
    """``(|0_L>, |1_L>)`` as normalized vectors on ``enc.N`` photons."""
    if enc.scheme is Scheme.GHZ:
        return _kron_power(_KET_H, enc.n), _kron_power(_KET_V, enc.n)
    zero_b, one_b = _block_basis(enc.p)
    return _kron_power(zero_b, enc.n), _kron_power(one_b, enc.n)


def photon_bell_ket(label: BellLabel) -> np.ndarray:
    s = float(label.sign)
    if label.symbol is Symbol.PHI:
        v = np.kron(_KET_H, _KET_H) + s * np.kron(_KET_V, _KET_V)
    else:
        v = np.kron(_KET_H, _KET_V) + s * np.kron(_KET_V, _KET_H)
    return v * _SQ2


BELL_BASIS = tuple(all_labels())
BELL_KETS = tuple(photon_bell_ket(lb) for lb in BELL_BASIS)


def ghz_state(N: int) -> PureState:
    if N < 1:
        raise ValueError("GHZ state needs at least one photon")
    return normalized(_kron_power(_KET_H, N) + _kron_power(_KET_V, N))


def shared_secret_state(secret: SecretSpec, enc: EncodingParams) -> PureState:
    zero, one = logical_basis(enc)
    return normalized(secret.alpha * zero + secret.beta * one)


def logical_pair_state(label: BellLabel, enc_a: EncodingParams, enc_b: EncodingParams) -> PureState:
    """Bell state of two logical qubits that may use different encodings."""
    a0, a1 = logical_basis(enc_a)
    b0, b1 = logical_basis(enc_b)
    s = float(label.sign)
    if label.symbol is Symbol.PHI:
        v = np.kron(a0, b0) + s * np.kron(a1, b1)
    else:
        v = np.kron(a0, b1) + s * np.kron(a1, b0)
    return normalized(v)


def receiver_encoding(m: int) -> EncodingParams:
    """Receivers hold one photon each; ``|0_L> = H^m``, ``|1_L> = V^m``."""
    return EncodingParams.ghz(m)


def network_channel(enc: EncodingParams, m: int) -> PureState:
    """Channel ``|0_L>_s'|0>_r + |1_L>_s'|1>_r`` with sender photons first.

    For the GHZ scheme this is the ``(n + m)``-photon GHZ state.
    """
    if m < 1:
        raise ValueError("at least one receiver is required")
    if enc.scheme is Scheme.GHZ:
        return ghz_state(enc.n + m)
    return logical_pair_state(BellLabel(Symbol.PHI, Sign.PLUS, Level.LOGICAL), enc, receiver_encoding(m))


def logical_bell_state(label: BellLabel, enc: EncodingParams) -> PureState:
    """Bell state at the label's level, in ``(1..w, 1'..w')`` order."""
    if label.level is Level.PHOTON:
        return PureState(photon_bell_ket(label))
    if label.level is Level.BLOCK:
        if enc.scheme is not Scheme.PARITY:
            raise ValueError("block-level Bell states need a parity encoding")
        return logical_pair_state(label, EncodingParams.parity(1, enc.p), EncodingParams.parity(1, enc.p))
    return logical_pair_state(label, enc, enc)


def _parity_patterns(k: int, odd: bool) -> list[tuple[int, ...]]:
    return [bits for bits in itertools.product((0, 1), repeat=k) if sum(bits) % 2 == int(odd)]


Decomposition = list[tuple[tuple[BellLabel, ...], Fraction]]


def decompose_logical_bell(label: BellLabel, enc: EncodingParams) -> Decomposition:
    """One-level expansion into products of lower-level Bell labels.

    Returns ``(labels, weight)`` pairs where ``labels[j]`` acts on the ``j``-th
    re-paired unit and ``weight`` is the exact Born weight of the term.  All
    terms enter with equal positive amplitude ``sqrt(weight)``.

    * logical, GHZ: ``n`` photon pairs with an even (``+``) or odd (``-``)
      number of minus-signed labels, all sharing the logical symbol;
    * logical, parity: the same rule over ``n`` block labels;
    * block: ``p`` photon pairs sharing the block sign, with an even (``phi``)
      or odd (``psi``) number of ``psi`` labels.
    """
    if label.level is Level.PHOTON:
        return [((label,), Fraction(1))]
    if label.level is Level.LOGICAL:
        sub = Level.PHOTON if enc.scheme is Scheme.GHZ else Level.BLOCK
        patterns = _parity_patterns(enc.n, odd=label.sign is Sign.MINUS)
        w = Fraction(1, len(patterns))
        return [
            (tuple(BellLabel(label.symbol, Sign.MINUS if b else Sign.PLUS, sub) for b in bits), w)
            for bits in patterns
        ]
    patterns = _parity_patterns(enc.p, odd=label.symbol is Symbol.PSI)
    w = Fraction(1, len(patterns))
    return [
        (tuple(BellLabel(Symbol.PSI if b else Symbol.PHI, label.sign) for b in bits), w)
        for bits in patterns
    ]


def expand_to_photons(label: BellLabel, enc: EncodingParams) -> Decomposition:
    """Full expansion down to photon pairs ``(k, k')`` for ``k = 1..N``."""
    out: Decomposition = []
    for parts, w in decompose_logical_bell(label, enc):
        if parts[0].level is Level.PHOTON:
            out.append((parts, w))
            continue
        subs = [expand_to_photons(part, enc) for part in parts]
        for combo in itertools.product(*subs):
            labels = tuple(lb for seq, _ in combo for lb in seq)
            weight = w
            for _, sw in combo:
                weight *= sw
            out.append((labels, weight))
    return out


def term_count(label: BellLabel, enc: EncodingParams) -> int:
    """Number of terms in :func:`decompose_logical_bell` (closed form)."""
    if label.level is Level.PHOTON:
        return 1
    k = enc.n if label.level is Level.LOGICAL else enc.p
    start = 1 if (label.sign is Sign.MINUS if label.level is Level.LOGICAL else label.symbol is Symbol.PSI) else 0
    return sum(comb(k, j) for j in range(start, k + 1, 2))


def paired_to_qubit_order(units: int, width: int) -> list[int]:
    """Permutation taking the paired order to ``(1..N, 1'..N')``.

    In the paired order unit ``j`` occupies ``2*width`` consecutive photons,
    its first-qubit half followed by its second-qubit half.  The result
    ``order`` satisfies ``qubitwise[k] = paired[order[k]]``.
    """
    first = [2 * width * j + k for j in range(units) for k in range(width)]
    second = [2 * width * j + width + k for j in range(units) for k in range(width)]
    return first + second


def _unit_ket(label: BellLabel, p: int) -> np.ndarray:
    if label.level is Level.PHOTON:
        return photon_bell_ket(label)
    return logical_bell_state(label, EncodingParams.parity(1, p)).amplitudes


def reassemble(terms: Decomposition, enc: EncodingParams) -> PureState:
    """Rebuild the qubit-ordered state from a decomposition."""
    if not terms:
        raise StateError("empty decomposition")
    units = len(terms[0][0])
    width = 1 if terms[0][0][0].level is Level.PHOTON else enc.p
    total = None
    for labels, w in terms:
        v = np.ones(1, dtype=complex)
        for lb in labels:
            v = np.kron(v, _unit_ket(lb, enc.p))
        v = v * np.sqrt(float(w))
        total = v if total is None else total + v
    paired = normalized(total)
    return permute(paired, paired_to_qubit_order(units, width))
