"""Parity-encoded teleportation with the concatenated Bell measurement (CBM).

Each sender holds one block of ``p`` photons of the secret and the matching
block of the channel, pairs photon ``k`` of one with photon ``k`` of the
other, and runs the level-1 measurement: ``Bpsi`` until it succeeds, sees a
loss or has failed ``q`` times, then the ``B±`` fixed by the ``Bpsi`` sign
(or the fallback variant) on the remaining pairs.  Level-1 results are
combined into a logical Bell outcome by :func:`bsm_level2` or, when symbol
errors are expected, :func:`logical_symbol_correct`.

Receivers hold one photon each (``|0_L> = H^m``), so the receiver-side
correction is the same as in :mod:`teleshare.protocol`.

Photon layout: secret ``0..N-1``, sender-side channel ``N..2N-1``, receivers
``2N..2N+m-1``; block ``j`` covers photons ``j*p .. j*p+p-1`` of each qubit.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .bsm import (
    BellOutcome,
    BsmNoise,
    BsmVariant,
    OutcomeKind,
    Prob,
    _sample,
    pair_response,
)
from .encoding import (
    BellLabel,
    EncodingParams,
    Level,
    Scheme,
    SecretSpec,
    Sign,
    Symbol,
    all_labels,
    expand_to_photons,
    network_channel,
    shared_secret_state,
)
from .protocol import (
    INCONSISTENT,
    PROTOCOL_FAILURE,
    Announcement,
    LogicalBellOutcome,
    Transcript,
    _enumerate_patterns,
    correction_for,
    receiver_target,
    sender,
    trial_rng,
)
from .qstate import MAX_PHOTONS, PureState, StateError, fidelity, tensor

_LOSSY = (OutcomeKind.LOSS_DETECTED, OutcomeKind.FAILURE_UNDETECTED)


class Level1Kind(Enum):
    SUCCESS = "success"
    SIGN_ONLY = "sign_only"
    FAILURE = "failure"


RawRecord = tuple[tuple[BsmVariant, BellOutcome], ...]


@dataclass(frozen=True)
class Level1Result:
    kind: Level1Kind
    symbol: Symbol | None = None
    sign: Sign | None = None
    raw: RawRecord = field(default=(), compare=False)
    tie: bool = field(default=False, compare=False)
    audit: bool = field(default=False, compare=False)

    def __str__(self):
        if self.kind is Level1Kind.SUCCESS:
            return f"{self.symbol.value}{self.sign.char}_(p)"
        if self.kind is Level1Kind.SIGN_ONLY:
            return self.sign.char
        return "failure"

    @classmethod
    def success(cls, symbol: Symbol, sign: Sign, **kw) -> "Level1Result":
        return cls(Level1Kind.SUCCESS, symbol, sign, **kw)

    @classmethod
    def sign_only(cls, sign: Sign, **kw) -> "Level1Result":
        return cls(Level1Kind.SIGN_ONLY, None, sign, **kw)

    @classmethod
    def failure(cls, **kw) -> "Level1Result":
        return cls(Level1Kind.FAILURE, **kw)

    def stripped(self) -> "Level1Result":
        return Level1Result(self.kind, self.symbol, self.sign)


# policy ----------------------------------------------------------------------

def next_variant(raw: RawRecord, q: int, fallback: BsmVariant = BsmVariant.BPLUS) -> BsmVariant:
    """Variant for the next photon pair given the record so far.

    An unflagged failure leaves a single click and is handled like a loss.
    """
    psi_fails = 0
    for variant, outcome in raw:
        if variant is not BsmVariant.BPSI:
            return variant
        if outcome.is_detected:
            return BsmVariant.BPLUS if outcome.label.sign is Sign.PLUS else BsmVariant.BMINUS
        if outcome.kind in _LOSSY:
            return fallback
        psi_fails += 1
    return fallback if psi_fails >= q else BsmVariant.BPSI


_VARIANT_SIGN = {BsmVariant.BPLUS: Sign.PLUS, BsmVariant.BMINUS: Sign.MINUS}


def sign_votes(raw: RawRecord) -> list[Sign]:
    """Signs implied by each level-0 result that carries one.

    A ``Bpsi`` detection votes its own sign; a ``B±`` run votes its sign when
    it detects and the opposite sign when it flags a failure.
    """
    votes = []
    for variant, outcome in raw:
        if outcome.kind in _LOSSY:
            continue
        if variant is BsmVariant.BPSI:
            if outcome.is_detected:
                votes.append(outcome.label.sign)
        else:
            s = _VARIANT_SIGN[variant]
            votes.append(s if outcome.is_detected else s.flipped())
    return votes


def majority_vote_sign(votes: Sequence[Sign] | RawRecord) -> tuple[Sign, bool]:
    """Majority sign and whether the vote was tied (ties resolve to ``+``)."""
    if votes and not isinstance(votes[0], Sign):
        votes = sign_votes(votes)
    if not votes:
        raise ValueError("no sign-bearing level-0 result to vote on")
    minus = sum(1 for v in votes if v is Sign.MINUS)
    plus = len(votes) - minus
    return (Sign.MINUS if minus > plus else Sign.PLUS), minus == plus


def classify_level1(raw: RawRecord) -> Level1Result:
    votes = sign_votes(raw)
    if not votes:
        return Level1Result.failure(raw=raw)
    sign, tie = majority_vote_sign(votes)
    symbols = []
    lossy = pm_clean = psi_success = False
    for variant, outcome in raw:
        if outcome.kind in _LOSSY:
            lossy = True
            symbols.append(None)
        elif variant is BsmVariant.BPSI:
            psi_success |= outcome.is_detected
            symbols.append(Symbol.PSI if outcome.is_detected else Symbol.PHI)
        else:
            pm_clean = True
            symbols.append(outcome.label.symbol if outcome.is_detected else None)
    if not lossy and None not in symbols:
        odd = sum(s is Symbol.PSI for s in symbols) % 2
        return Level1Result.success(Symbol.PSI if odd else Symbol.PHI, sign, raw=raw, tie=tie)
    # sign known only from Bpsi while every B± saw a loss: flagged for audit
    return Level1Result.sign_only(sign, raw=raw, tie=tie, audit=psi_success and not pm_clean)


Responder = Callable[[int, BellLabel, BsmVariant], BellOutcome]


def bsm_level1(
    labels: Sequence[BellLabel],
    q: int,
    noise: BsmNoise = BsmNoise(),
    rng: np.random.Generator | None = None,
    *,
    lost: Sequence[bool] | None = None,
    fallback: BsmVariant = BsmVariant.BPLUS,
    responder: Responder | None = None,
) -> Level1Result:
    """Sample one level-1 measurement of a block pair.

    ``labels[k]`` is the Bell label photon pair ``k`` is in; ``lost`` forces
    pairs to register a loss.  ``responder`` overrides the analyzer model
    (used to replay recorded draws).
    """
    p = len(labels)
    if p < 1:
        raise ValueError("a block needs at least one photon pair")
    if not 0 <= q <= p - 1:
        raise ValueError(f"q must satisfy 0 <= q <= p-1, got q={q}, p={p}")
    if lost is not None and len(lost) != p:
        raise ValueError("lost flags must match the number of pairs")
    if responder is None:
        rng = rng if rng is not None else np.random.default_rng()

        def responder(k, label, variant):
            if lost is not None and lost[k]:
                return BellOutcome(OutcomeKind.LOSS_DETECTED)
            return _sample(pair_response(label, variant, noise), rng)

    raw: RawRecord = ()
    for k, label in enumerate(labels):
        variant = next_variant(raw, q, fallback)
        raw += ((variant, responder(k, label, variant)),)
    return classify_level1(raw)


def level1_branches(
    labels: Sequence[BellLabel],
    q: int,
    noise: BsmNoise,
    fallback: BsmVariant = BsmVariant.BPLUS,
    lost: Sequence[bool] | None = None,
) -> list[tuple[Level1Result, Prob]]:
    """Every level-1 record for a block pair with its probability."""
    partial: list[tuple[RawRecord, Prob]] = [((), 1)]
    for k, label in enumerate(labels):
        nxt = []
        for raw, w in partial:
            variant = next_variant(raw, q, fallback)
            if lost is not None and lost[k]:
                dist = [(BellOutcome(OutcomeKind.LOSS_DETECTED), 1)]
            else:
                dist = pair_response(label, variant, noise)
            for outcome, pw in dist:
                nxt.append((raw + ((variant, outcome),), w * pw))
        partial = nxt
    return [(classify_level1(raw), w) for raw, w in partial]


# level 2 ---------------------------------------------------------------------

def _logical_sign(results: Iterable[Level1Result]) -> Sign:
    minus = sum(1 for r in results if r.sign is Sign.MINUS)
    return Sign.MINUS if minus % 2 else Sign.PLUS


def bsm_level2(results: Sequence[Level1Result]) -> LogicalBellOutcome:
    """Logical outcome: symbol from any success, sign from the parity of minus signs."""
    if not results:
        raise ValueError("need one level-1 result per block")
    if any(r.kind is Level1Kind.FAILURE for r in results):
        return PROTOCOL_FAILURE
    symbols = {r.symbol for r in results if r.kind is Level1Kind.SUCCESS}
    if not symbols:
        return PROTOCOL_FAILURE
    if len(symbols) > 1:
        return INCONSISTENT
    return LogicalBellOutcome.of(symbols.pop(), _logical_sign(results))


def logical_symbol_correct(results: Sequence[Level1Result]) -> LogicalBellOutcome:
    """Like :func:`bsm_level2` but the symbol is a majority over successful blocks.

    ``overruled`` on the returned outcome counts the outvoted blocks; a tie
    is reported as inconsistent.
    """
    if not results:
        raise ValueError("need one level-1 result per block")
    if any(r.kind is Level1Kind.FAILURE for r in results):
        return PROTOCOL_FAILURE
    counts = Counter(r.symbol for r in results if r.kind is Level1Kind.SUCCESS)
    if not counts:
        return PROTOCOL_FAILURE
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return INCONSISTENT
    symbol, votes = ranked[0]
    return LogicalBellOutcome.of(symbol, _logical_sign(results), overruled=sum(counts.values()) - votes)


# adversary -------------------------------------------------------------------

class Strategy(Enum):
    FLIP_SIGN = "flip_sign"
    FLIP_SYMBOL = "flip_symbol"
    REPORT_FAILURE = "report_failure"
    RANDOM = "random"


_CONCRETE = (Strategy.FLIP_SIGN, Strategy.FLIP_SYMBOL, Strategy.REPORT_FAILURE)


def _mutate(result: Level1Result, strategy: Strategy) -> Level1Result:
    if strategy is Strategy.REPORT_FAILURE:
        return Level1Result.failure()
    if strategy is Strategy.FLIP_SIGN and result.kind is not Level1Kind.FAILURE:
        return Level1Result(result.kind, result.symbol, result.sign.flipped())
    if strategy is Strategy.FLIP_SYMBOL and result.kind is Level1Kind.SUCCESS:
        return Level1Result(result.kind, result.symbol.flipped(), result.sign)
    return result.stripped()


@dataclass(frozen=True)
class AdversaryModel:
    """Senders (1-based) whose announcements are altered before level 2."""

    dishonest: frozenset[int] = frozenset()
    strategy: Strategy = Strategy.FLIP_SYMBOL

    def __post_init__(self):
        object.__setattr__(self, "dishonest", frozenset(self.dishonest))
        if any(i < 1 for i in self.dishonest):
            raise ValueError("sender indices are 1-based")

    def __str__(self):
        if not self.dishonest:
            return "honest"
        return f"{self.strategy.value}@" + "+".join(f"s{i}" for i in sorted(self.dishonest))

    def check(self, n: int) -> None:
        if any(i > n for i in self.dishonest):
            raise ValueError(f"dishonest senders {sorted(self.dishonest)} not all among {n} senders")

    def announce(self, index: int, result: Level1Result, rng: np.random.Generator | None = None) -> Level1Result:
        if index not in self.dishonest:
            return result
        strategy = self.strategy
        if strategy is Strategy.RANDOM:
            strategy = _CONCRETE[int((rng or np.random.default_rng()).integers(3))]
        return _mutate(result, strategy)

    def announce_branches(self, index: int, result: Level1Result) -> list[tuple[Level1Result, Fraction]]:
        if index not in self.dishonest:
            return [(result, Fraction(1))]
        if self.strategy is Strategy.RANDOM:
            return [(_mutate(result, s), Fraction(1, 3)) for s in _CONCRETE]
        return [(_mutate(result, self.strategy), Fraction(1))]


HONEST = AdversaryModel()


class SimFidelity(Enum):
    EXACT = "exact"
    LABEL = "label"


# pipeline --------------------------------------------------------------------

def _pairs(enc: EncodingParams) -> list[tuple[int, int]]:
    return [(k, enc.N + k) for k in range(enc.N)]


def _blocks(labels: Sequence[BellLabel], enc: EncodingParams) -> list[tuple[BellLabel, ...]]:
    return [tuple(labels[j * enc.p:(j + 1) * enc.p]) for j in range(enc.n)]


def logical_from_hidden(labels: Sequence[BellLabel], enc: EncodingParams) -> BellLabel:
    """Logical Bell label implied by the photon-pair labels (noiseless reading)."""
    block_signs = []
    symbol = None
    for block in _blocks(labels, enc):
        odd = sum(lb.symbol is Symbol.PSI for lb in block) % 2
        symbol = Symbol.PSI if odd else Symbol.PHI
        block_signs.append(block[0].sign)
    minus = sum(s is Sign.MINUS for s in block_signs) % 2
    return BellLabel(symbol, Sign.MINUS if minus else Sign.PLUS, Level.LOGICAL)


def ft_joint_state(secret: SecretSpec, enc: EncodingParams, m: int) -> PureState:
    if 2 * enc.N + m > MAX_PHOTONS:
        raise StateError(
            f"exact simulation needs {2 * enc.N + m} photons (cap {MAX_PHOTONS}); use SimFidelity.LABEL"
        )
    return tensor(shared_secret_state(secret, enc), network_channel(enc, m))


def _check_enc(enc: EncodingParams, m: int) -> None:
    if enc.scheme is not Scheme.PARITY:
        raise ValueError("fault-tolerant teleportation needs the parity encoding")
    if m < 1:
        raise ValueError("at least one receiver is required")


def hidden_distribution(secret: SecretSpec, enc: EncodingParams, m: int, sim: SimFidelity):
    """``(labels, weight, receiver_state)`` for every joint pair-label pattern.

    ``EXACT`` projects the dense joint state (float Born weights, dense
    receiver states); ``LABEL`` expands the logical Bell states combinatorially
    (exact rational weights, no states).
    """
    if sim is SimFidelity.EXACT:
        return _enumerate_patterns(ft_joint_state(secret, enc, m), _pairs(enc))
    out = []
    for logical in all_labels(Level.LOGICAL):
        for labels, w in expand_to_photons(logical, enc):
            out.append((labels, Fraction(1, 4) * w, None))
    return out


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _logical_residual(label: BellLabel) -> np.ndarray:
    # receivers hold P_L |S> before correction
    op = np.eye(2, dtype=complex)
    if label.sign is Sign.MINUS:
        op = _PAULI_Z @ op
    if label.symbol is Symbol.PSI:
        op = _PAULI_X @ op
    return op


def _logical_correction(outcome: LogicalBellOutcome) -> np.ndarray:
    op = np.eye(2, dtype=complex)
    if outcome.symbol is Symbol.PSI:
        op = _PAULI_X @ op
    if outcome.sign is Sign.MINUS:
        op = _PAULI_Z @ op
    return op


def logical_fidelity(secret: SecretSpec, true_label: BellLabel, outcome: LogicalBellOutcome) -> float:
    """Receiver fidelity computed in the two-dimensional logical space."""
    v = secret.vector()
    out = _logical_correction(outcome) @ _logical_residual(true_label) @ v
    return float(abs(np.vdot(v, out)) ** 2)


@dataclass
class FTBranch:
    hidden: tuple[BellLabel, ...]
    true_logical: BellLabel
    results: tuple[Level1Result, ...]
    announced: tuple[Level1Result, ...]
    logical: LogicalBellOutcome
    probability: Prob
    fidelity: float | None

    @property
    def correct(self) -> bool:
        return self.logical.identified and self.logical.label == self.true_logical


def _combine(announced: Sequence[Level1Result], symbol_correct: bool) -> LogicalBellOutcome:
    return logical_symbol_correct(announced) if symbol_correct else bsm_level2(announced)


def enumerate_ft(
    secret: SecretSpec,
    enc: EncodingParams,
    m: int = 1,
    noise: BsmNoise = BsmNoise(),
    adversary: AdversaryModel = HONEST,
    sim: SimFidelity = SimFidelity.EXACT,
    symbol_correct: bool = False,
    fallback: BsmVariant = BsmVariant.BPLUS,
) -> list[FTBranch]:
    """All branches of the fault-tolerant protocol.

    Weights are rational in ``LABEL`` mode; ``EXACT`` mode multiplies dense
    Born weights with rational record weights.
    """
    _check_enc(enc, m)
    adversary.check(enc.n)
    noise_q = noise.exact()
    target = receiver_target(secret, m) if sim is SimFidelity.EXACT else None
    cache: dict[tuple[BellLabel, ...], list[tuple[Level1Result, Prob]]] = {}

    def block_dist(block):
        if block not in cache:
            merged: dict[Level1Result, Prob] = {}
            for res, w in level1_branches(block, enc.q, noise_q, fallback):
                key = res.stripped()
                merged[key] = merged.get(key, 0) + w
            cache[block] = list(merged.items())
        return cache[block]

    out = []
    for labels, weight, rstate in hidden_distribution(secret, enc, m, sim):
        true_logical = logical_from_hidden(labels, enc)
        per_sender = [block_dist(b) for b in _blocks(labels, enc)]
        for combo in itertools.product(*per_sender):
            results = tuple(r for r, _ in combo)
            base = weight
            for _, w in combo:
                base = base * w
            mutated = [adversary.announce_branches(j + 1, r) for j, r in enumerate(results)]
            for ann_combo in itertools.product(*mutated):
                announced = tuple(r for r, _ in ann_combo)
                prob = base
                for _, w in ann_combo:
                    prob = prob * w
                if not prob:
                    continue
                logical = _combine(announced, symbol_correct)
                fid = None
                if logical.identified:
                    if rstate is not None:
                        final = correction_for(logical, m).apply(rstate)
                        fid = fidelity(final, target)
                    else:
                        fid = logical_fidelity(secret, true_logical, logical)
                out.append(FTBranch(labels, true_logical, results, announced, logical, prob, fid))
    return out


OUTCOME_CLASSES = ("success", "failure", "inconsistent")


def outcome_class(logical: LogicalBellOutcome) -> str:
    return {"identified": "success"}.get(logical.kind.value, logical.kind.value)


def outcome_probabilities(branches: Sequence[FTBranch]) -> dict[str, Prob]:
    """Probabilities of success/failure/inconsistent plus ``correct`` and per-block ``signonly``."""
    acc: dict[str, Prob] = {c: 0 for c in OUTCOME_CLASSES + ("correct", "signonly")}
    for b in branches:
        acc[outcome_class(b.logical)] += b.probability
        if b.correct:
            acc["correct"] += b.probability
        so = sum(r.kind is Level1Kind.SIGN_ONLY for r in b.results)
        if so:
            acc["signonly"] += b.probability * Fraction(so, len(b.results))
    return acc


def sample_hidden(secret: SecretSpec, enc: EncodingParams, m: int, sim: SimFidelity, rng: np.random.Generator):
    """One joint pair-label pattern and (``EXACT`` only) the receiver state."""
    if sim is SimFidelity.EXACT:
        from .bsm import measure_bell

        state = ft_joint_state(secret, enc, m)
        labels = []
        for k in range(enc.N):
            # pair k sits at (0, N-k) once the previous pairs are removed
            _, state, label = measure_bell(state, 0, enc.N - k, BsmVariant.BPSI, BsmNoise(), rng)
            labels.append(label)
        return tuple(labels), state
    symbol = Symbol.PSI if rng.random() < 0.5 else Symbol.PHI
    labels = []
    for _ in range(enc.n):
        sign = Sign.MINUS if rng.random() < 0.5 else Sign.PLUS
        bits = list(rng.integers(0, 2, size=enc.p - 1))
        bits.append((sum(bits) + (symbol is Symbol.PSI)) % 2)
        labels += [BellLabel(Symbol.PSI if b else Symbol.PHI, sign) for b in bits]
    return tuple(labels), None


def run_ft_teleportation(
    secret: SecretSpec,
    enc: EncodingParams,
    m: int = 1,
    noise: BsmNoise = BsmNoise(),
    adversary: AdversaryModel = HONEST,
    mode: str = "sample",
    sim: SimFidelity = SimFidelity.EXACT,
    seed: int = 0,
    trial: int = 0,
    symbol_correct: bool = False,
    fallback: BsmVariant = BsmVariant.BPLUS,
    lost: Sequence[bool] | None = None,
):
    """Parity secret + parity channel, per-sender level-1 runs, adversary, level 2, correction.

    ``mode="enumerate"`` returns :func:`enumerate_ft` branches.  In sample
    mode ``lost`` (one flag per photon pair, in pair order) forces losses on
    top of the loss rate.
    """
    if mode == "enumerate":
        return enumerate_ft(secret, enc, m, noise, adversary, sim, symbol_correct, fallback)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    _check_enc(enc, m)
    adversary.check(enc.n)
    if lost is not None and len(lost) != enc.N:
        raise ValueError("lost flags must cover every photon pair")
    rng = trial_rng(seed, trial)
    labels, rstate = sample_hidden(secret, enc, m, sim, rng)
    true_logical = logical_from_hidden(labels, enc)
    results, announcements = [], []
    for j, block in enumerate(_blocks(labels, enc)):
        block_lost = None if lost is None else lost[j * enc.p:(j + 1) * enc.p]
        res = bsm_level1(block, enc.q, noise, rng, lost=block_lost, fallback=fallback)
        results.append(res)
        announcements.append(Announcement(sender(j + 1), adversary.announce(j + 1, res, rng), j))
    announced = [a.outcome for a in announcements]
    logical = _combine(announced, symbol_correct)
    fid = final = corr = None
    if logical.identified:
        corr = correction_for(logical, m)
        if rstate is not None:
            final = corr.apply(rstate)
            fid = fidelity(final, receiver_target(secret, m))
        else:
            fid = logical_fidelity(secret, true_logical, logical)
    return Transcript(
        n=enc.n, m=m, secret=secret, noise=noise,
        announcements=tuple(announcements),
        logical_outcome=logical,
        event_class=outcome_class(logical),
        correction=corr, fidelity=fid, final_state=final,
        hidden=labels, seed=seed, trial=trial,
        extra={
            "p": enc.p, "q": enc.q, "adversary": str(adversary),
            "level1": [str(r) for r in results],
            "correct": logical.identified and logical.label == true_logical,
        },
    )
