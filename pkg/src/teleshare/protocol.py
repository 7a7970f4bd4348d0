"""Teleportation of a GHZ-encoded shared secret between ``n`` senders and ``m`` receivers.

Photon layout of a run: secret photons ``s_1..s_n`` at indices ``0..n-1``,
sender-side channel photons ``s'_1..s'_n`` at ``n..2n-1`` and receiver
photons ``r_1..r_m`` at ``2n..2n+m-1``.  Sender ``s_i`` runs a ``B-``
analyzer on ``(s_i, s'_i)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bsm import (
    BellOutcome,
    BsmNoise,
    BsmVariant,
    OutcomeKind,
    failure_subspace,
    measure_bell,
    measure_bell_branches,
    noiseless_outcome,
    pair_response,
)
from .encoding import (
    BELL_BASIS,
    BellLabel,
    EncodingParams,
    Level,
    Sign,
    SecretSpec,
    Symbol,
    all_labels,
    decompose_logical_bell,
    network_channel,
    shared_secret_state,
)
from .qstate import (
    DensityMatrix,
    Pauli,
    PauliOp,
    PureState,
    StateError,
    apply_paulis,
    fidelity,
    partial_trace,
    tensor,
)


class Role(Enum):
    SENDER = "s"
    RECEIVER = "r"


@dataclass(frozen=True)
class PartyId:
    role: Role
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("party indices are 1-based")

    def __str__(self):
        return f"{self.role.value}{self.index}"

    def __lt__(self, other):
        return (self.role.value, self.index) < (other.role.value, other.index)


def sender(i: int) -> PartyId:
    return PartyId(Role.SENDER, i)


def receiver(j: int) -> PartyId:
    return PartyId(Role.RECEIVER, j)


@dataclass(frozen=True)
class Announcement:
    party: PartyId
    outcome: BellOutcome  # Level1Result on the fault-tolerant path
    sequence_number: int


class LogicalKind(Enum):
    IDENTIFIED = "identified"
    FAILURE = "failure"
    INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class LogicalBellOutcome:
    kind: LogicalKind
    symbol: Symbol | None = None
    sign: Sign | None = None
    overruled: int = 0

    def __str__(self):
        return str(self.label) if self.identified else self.kind.value

    @property
    def identified(self) -> bool:
        return self.kind is LogicalKind.IDENTIFIED

    @property
    def label(self) -> BellLabel:
        if not self.identified:
            raise ValueError(f"no logical label for a {self.kind.value} outcome")
        return BellLabel(self.symbol, self.sign, Level.LOGICAL)

    @classmethod
    def of(cls, symbol: Symbol, sign: Sign, overruled: int = 0) -> "LogicalBellOutcome":
        return cls(LogicalKind.IDENTIFIED, symbol, sign, overruled)


PROTOCOL_FAILURE = LogicalBellOutcome(LogicalKind.FAILURE)
INCONSISTENT = LogicalBellOutcome(LogicalKind.INCONSISTENT)


def _common(values: Iterable):
    vals = set(values)
    return vals.pop() if len(vals) == 1 else None


def infer_logical_outcome(outcomes: Sequence[BellOutcome], variant: BsmVariant = BsmVariant.BMINUS) -> LogicalBellOutcome:
    """Combine per-sender analyzer records into a logical Bell outcome.

    A lost photon destroys GHZ coherence and an unflagged failure cannot be
    told apart from a loss, so either one fails the run.  Each flagged
    failure contributes the sign shared by the analyzer's failure subspace;
    the symbol must come from the detections.
    """
    if not outcomes:
        raise ValueError("need at least one analyzer outcome")
    if any(o.kind in (OutcomeKind.LOSS_DETECTED, OutcomeKind.FAILURE_UNDETECTED) for o in outcomes):
        return PROTOCOL_FAILURE
    failed = failure_subspace(variant)
    fail_symbol = _common(lb.symbol for lb in failed)
    fail_sign = _common(lb.sign for lb in failed)
    symbols, minus = set(), 0
    for o in outcomes:
        if o.is_detected:
            symbols.add(o.label.symbol)
            minus += o.label.sign is Sign.MINUS
        else:
            if fail_symbol is not None:
                symbols.add(fail_symbol)
            if fail_sign is None:
                return PROTOCOL_FAILURE
            minus += fail_sign is Sign.MINUS
    if not symbols:
        return PROTOCOL_FAILURE
    if len(symbols) > 1:
        return INCONSISTENT
    return LogicalBellOutcome.of(symbols.pop(), Sign.MINUS if minus % 2 else Sign.PLUS)


@dataclass(frozen=True)
class PauliCorrection:
    """Pauli operators on receiver photons, indexed from 0 within the receiver group."""

    ops: tuple[PauliOp, ...] = ()

    def apply(self, state: PureState, offset: int = 0) -> PureState:
        return apply_paulis(state, (PauliOp(op.kind, op.target_photon + offset) for op in self.ops))

    def __str__(self):
        return " ".join(f"{op.kind.value}@r{op.target_photon + 1}" for op in self.ops) or "I"


def correction_for(outcome: LogicalBellOutcome, m: int) -> PauliCorrection:
    """Receiver-side correction: logical Z is Z on ``r_1``, logical X is X on every receiver."""
    if not outcome.identified:
        raise ValueError(f"cannot correct a {outcome.kind.value} outcome")
    ops = []
    if outcome.symbol is Symbol.PSI:
        ops += [PauliOp(Pauli.X, k) for k in range(m)]
    if outcome.sign is Sign.MINUS:
        ops.append(PauliOp(Pauli.Z, 0))
    return PauliCorrection(tuple(ops))


def coincidence_recorded(outcomes: Sequence[BellOutcome]) -> bool:
    """Whether every analyzer registered two photons.

    Unflagged failures and losses leave an analyzer with a single click, so
    the run produces no full coincidence and never enters the event record.
    """
    return not any(o.kind in (OutcomeKind.LOSS_DETECTED, OutcomeKind.FAILURE_UNDETECTED) for o in outcomes)


def classify_event(outcomes: Sequence[BellOutcome | Announcement]) -> str:
    """``S``/``F`` per sender in announcement order (``SS``, ``SF``, ... for two senders), or ``E``."""
    outs = [a.outcome if isinstance(a, Announcement) else a for a in outcomes]
    if not coincidence_recorded(outs):
        return "E"
    return "".join("S" if o.is_detected else "F" for o in outs)


def event_classes(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("SF", repeat=n)] + ["E"]


@dataclass
class Transcript:
    """Record of one run (or one enumerated branch)."""

    n: int
    m: int
    secret: SecretSpec
    noise: BsmNoise
    announcements: tuple[Announcement, ...]
    logical_outcome: LogicalBellOutcome
    event_class: str
    correction: PauliCorrection | None = None
    fidelity: float | None = None
    final_state: PureState | DensityMatrix | None = None
    hidden: tuple[BellLabel, ...] = ()
    probability: Fraction | None = None
    seed: int | None = None
    trial: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def outcomes(self) -> tuple[BellOutcome, ...]:
        return tuple(a.outcome for a in self.announcements)

    @property
    def succeeded(self) -> bool:
        return self.logical_outcome.identified

    def to_record(self) -> dict:
        rec = {
            "seed": self.seed,
            "n": self.n,
            "m": self.m,
            "alpha": [self.secret.alpha.real, self.secret.alpha.imag],
            "beta": [self.secret.beta.real, self.secret.beta.imag],
            "f": float(self.noise.f),
            "eta": float(self.noise.eta),
            "epsilon": float(self.noise.epsilon),
            "outcomes": [str(o) for o in self.outcomes],
            "logical_outcome": str(self.logical_outcome),
            "event_class": self.event_class,
            "fidelity": None if self.fidelity is None else round(self.fidelity, 12),
        }
        if self.trial is not None:
            rec["trial"] = self.trial
        if self.probability is not None:
            rec["probability"] = str(self.probability)
        rec.update(self.extra)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), separators=(",", ":"))


def write_records(transcripts: Iterable[Transcript], fh) -> None:
    for t in transcripts:
        fh.write(t.to_json() + "\n")


def receiver_target(secret: SecretSpec, m: int) -> PureState:
    return shared_secret_state(secret, EncodingParams.ghz(m))


def joint_state(secret: SecretSpec, n: int, m: int) -> PureState:
    enc = EncodingParams.ghz(n)
    return tensor(shared_secret_state(secret, enc), network_channel(enc, m))


def hidden_pattern_weights(n: int) -> dict[tuple[BellLabel, ...], Fraction]:
    """Exact weight of each joint Bell-label pattern on the ``n`` sender pairs.

    Every logical Bell outcome occurs with weight 1/4 whatever the secret,
    and each expands into equally weighted pair patterns.
    """
    enc = EncodingParams.ghz(n)
    out = {}
    for logical in all_labels(Level.LOGICAL):
        for labels, w in decompose_logical_bell(logical, enc):
            out[labels] = Fraction(1, 4) * w
    return out


class _Tracker:
    """Maps original photon indices to positions in a shrinking state."""

    def __init__(self, num_photons: int):
        self.alive = list(range(num_photons))

    def pos(self, photon: int) -> int:
        return self.alive.index(photon)

    def remove(self, *photons: int) -> None:
        for p in photons:
            self.alive.remove(p)


def _enumerate_patterns(state: PureState, pairs: Sequence[tuple[int, int]]):
    """Leaves ``(labels, born, remaining_state)`` of projecting every pair on the Bell basis."""
    leaves = [((), 1.0, state, _Tracker(state.num_photons))]
    for a, b in pairs:
        nxt = []
        for labels, born, st, tr in leaves:
            i, j = tr.pos(a), tr.pos(b)
            child_tr = _Tracker(0)
            child_tr.alive = [p for p in tr.alive if p not in (a, b)]
            for outcome, label, prob, _, post in measure_bell_branches(st, i, j, BsmVariant.BMINUS, BsmNoise()):
                if prob > 1e-14:
                    nxt.append((labels + (label,), born * prob, post, child_tr))
        leaves = nxt
    return [(labels, born, st) for labels, born, st, _ in leaves]


def _sender_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, n + i) for i in range(n)]


def _announce(outcomes: Sequence[BellOutcome]) -> tuple[Announcement, ...]:
    return tuple(Announcement(sender(i + 1), o, i) for i, o in enumerate(outcomes))


def _finish(receiver_state: PureState, outcomes, secret, m):
    logical = infer_logical_outcome(outcomes)
    if not logical.identified:
        return logical, None, receiver_state, None
    corr = correction_for(logical, m)
    final = corr.apply(receiver_state)
    return logical, corr, final, fidelity(final, receiver_target(secret, m))


def check_photon_budget(n: int, m: int) -> None:
    from .qstate import MAX_PHOTONS

    if 2 * n + m > MAX_PHOTONS:
        raise StateError(f"run needs {2 * n + m} photons, above the dense cap of {MAX_PHOTONS}")


def enumerate_teleportation(secret: SecretSpec, n: int, m: int, noise: BsmNoise = BsmNoise()) -> list[Transcript]:
    """Every branch of the protocol with its exact probability.

    Branch weights are products of the exact pattern weight from
    :func:`hidden_pattern_weights` and rational record probabilities; the
    dense Born weights are checked against them.
    """
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    check_photon_budget(n, m)
    noise_q = noise.exact()
    exact = hidden_pattern_weights(n)
    leaves = _enumerate_patterns(joint_state(secret, n, m), _sender_pairs(n))
    if len(leaves) != len(exact):
        raise RuntimeError("dense pattern support disagrees with the label decomposition")
    out = []
    for labels, born, rstate in leaves:
        weight = exact[labels]
        if abs(born - float(weight)) > 1e-10:
            raise RuntimeError(f"Born weight {born} disagrees with exact {weight} for {labels}")
        per_sender = [pair_response(lb, BsmVariant.BMINUS, noise_q) for lb in labels]
        for combo in itertools.product(*per_sender):
            outcomes = tuple(o for o, _ in combo)
            prob = weight
            for _, w in combo:
                prob *= w
            if not prob:
                continue
            logical, corr, final, fid = _finish(rstate, outcomes, secret, m)
            out.append(Transcript(
                n=n, m=m, secret=secret, noise=noise,
                announcements=_announce(outcomes),
                logical_outcome=logical,
                event_class=classify_event(outcomes),
                correction=corr, fidelity=fid, final_state=final,
                hidden=labels, probability=prob,
            ))
    return out


def run_once(secret: SecretSpec, n: int, m: int, noise: BsmNoise, rng: np.random.Generator) -> Transcript:
    check_photon_budget(n, m)
    state = joint_state(secret, n, m)
    tracker = _Tracker(state.num_photons)
    outcomes, hidden = [], []
    for a, b in _sender_pairs(n):
        outcome, state, label = measure_bell(state, tracker.pos(a), tracker.pos(b), BsmVariant.BMINUS, noise, rng)
        tracker.remove(a, b)
        outcomes.append(outcome)
        hidden.append(label)
    logical, corr, final, fid = _finish(state, outcomes, secret, m)
    return Transcript(
        n=n, m=m, secret=secret, noise=noise,
        announcements=_announce(outcomes),
        logical_outcome=logical,
        event_class=classify_event(outcomes),
        correction=corr, fidelity=fid, final_state=final,
        hidden=tuple(hidden),
    )


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def run_teleportation(
    secret: SecretSpec,
    n: int,
    m: int,
    noise: BsmNoise = BsmNoise(),
    mode: str = "sample",
    seed: int = 0,
    trials: int = 1,
):
    """Run the protocol.

    ``mode="enumerate"`` returns the list of all branches (see
    :func:`enumerate_teleportation`).  ``mode="sample"`` returns one
    :class:`Transcript` per trial; trial ``t`` draws from a generator seeded
    by ``(seed, t)`` so results do not depend on scheduling.
    """
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    if mode == "enumerate":
        return enumerate_teleportation(secret, n, m, noise)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for t in range(trials):
        tr = run_once(secret, n, m, noise, trial_rng(seed, t))
        tr.seed, tr.trial = seed, t
        out.append(tr)
    return out


def success_probability(branches: Iterable[Transcript]) -> Fraction:
    return sum((b.probability for b in branches if b.succeeded), Fraction(0))


def event_distribution(branches: Sequence[Transcript], conditional: bool = True) -> dict[str, Fraction]:
    """Exact weight of each event class.

    With ``conditional=True`` weights are relative to runs that produce a
    full coincidence, which is how event frequencies are counted.
    """
    n = branches[0].n
    acc = {c: Fraction(0) for c in event_classes(n)}
    total = Fraction(0)
    for b in branches:
        if conditional and not coincidence_recorded(b.outcomes):
            continue
        acc[b.event_class] += b.probability
        total += b.probability
    if conditional:
        if not total:
            raise ValueError("no branch produces a coincidence")
        acc = {c: w / total for c, w in acc.items()}
    return acc


def _photons_of(party: PartyId, n: int) -> list[int]:
    if party.role is Role.SENDER:
        return [party.index - 1, n + party.index - 1]
    return [2 * n + party.index - 1]


def sub_party_reduced_state(
    secret: SecretSpec,
    n: int,
    m: int,
    parties: Iterable[PartyId],
    announced: Mapping[int, BellLabel | BellOutcome],
) -> DensityMatrix:
    """State of the photons held by ``parties`` given other senders' results.

    ``announced`` maps 1-based sender indices outside the group to either the
    Bell label their pair collapsed onto or the outcome they announced; an
    announced outcome is averaged over the labels consistent with it.  Senders
    outside the group that are absent from ``announced`` have not measured and
    their photons are traced out.  When every sender has announced, receivers
    apply the correction implied by the announcements first.

    Photons are ordered by party (``s_i`` holds ``(s_i, s'_i)``).
    """
    parties = sorted(set(parties))
    if not parties:
        raise ValueError("sub-party must be nonempty")
    for p in parties:
        if p.index > (n if p.role is Role.SENDER else m):
            raise ValueError(f"no party {p} in a run with n={n}, m={m}")
    inside = {p.index for p in parties if p.role is Role.SENDER}
    if len(parties) == n + m:
        raise ValueError("the group holds every photon of the run; nothing is hidden from it")
    if inside & set(announced):
        raise ValueError("a sender inside the group cannot be conditioned on its own announcement")
    branches = [(1.0, joint_state(secret, n, m), _Tracker(2 * n + m), ())]
    for idx in sorted(announced):
        ann = announced[idx]
        allowed = [ann] if isinstance(ann, BellLabel) else [
            lb for lb in BELL_BASIS if noiseless_outcome(lb, BsmVariant.BMINUS) == ann
        ]
        a, b = idx - 1, n + idx - 1
        nxt = []
        for w, st, tr, rec in branches:
            child = _Tracker(0)
            child.alive = [p for p in tr.alive if p not in (a, b)]
            for outcome, label, prob, _, post in measure_bell_branches(st, tr.pos(a), tr.pos(b), BsmVariant.BMINUS, BsmNoise()):
                if label in allowed and prob > 1e-14:
                    # a known label counts as fully resolved when choosing the correction
                    known = BellOutcome.detected(label) if isinstance(ann, BellLabel) \
                        else noiseless_outcome(label, BsmVariant.BMINUS)
                    nxt.append((w * prob, post, child, rec + (known,)))
        branches = nxt
    if not branches:
        raise ValueError("announcements have zero probability")
    held = [ph for p in parties for ph in _photons_of(p, n)]
    correct = not inside and len(announced) == n
    total = sum(w for w, *_ in branches)
    parts = []
    for w, st, tr, rec in branches:
        if correct:
            logical = infer_logical_outcome(rec)
            if logical.identified:
                st = correction_for(logical, m).apply(st, offset=tr.pos(2 * n))
        parts.append((w / total, partial_trace(st, [tr.pos(ph) for ph in held])))
    return DensityMatrix.mixture(parts)
