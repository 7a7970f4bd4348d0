"""Linear-optics Bell-state analyzers at the projector level.

An analyzer resolves two of the four Bell states; the other two form its
failure subspace.  Noise enters through three knobs:

* loss rate ``eta`` per photon -- any missing photon gives ``LossDetected``;
* failure-detection efficiency ``f`` -- a failure is flagged as such with
  probability ``f`` and otherwise goes unrecorded;
* flip rate ``epsilon`` -- the analyzer responds to a label whose sign
  (``epsilon/2``) or symbol (``epsilon/2``) has been flipped.

The physical collapse is always onto the true Bell label, so the
post-measurement state does not depend on how the record was corrupted.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

import numpy as np

from .encoding import BELL_BASIS, BELL_KETS, PHI_MINUS, PHI_PLUS, PSI_MINUS, PSI_PLUS, BellLabel
from .qstate import PureState, StateError, enumerate_two_photon

Prob = Union[Fraction, float]


class BsmVariant(Enum):
    BPSI = "Bpsi"
    BPLUS = "B+"
    BMINUS = "B-"

    @property
    def detected(self) -> tuple[BellLabel, BellLabel]:
        return _DETECTED[self]


_DETECTED = {
    BsmVariant.BPSI: (PSI_PLUS, PSI_MINUS),
    BsmVariant.BPLUS: (PHI_PLUS, PSI_PLUS),
    BsmVariant.BMINUS: (PHI_MINUS, PSI_MINUS),
}


def failure_subspace(variant: BsmVariant) -> list[BellLabel]:
    """The two Bell labels the analyzer cannot resolve."""
    return [lb for lb in BELL_BASIS if lb not in variant.detected]


class OutcomeKind(Enum):
    DETECTED = "detected"
    FAILURE_DETECTED = "failure"
    FAILURE_UNDETECTED = "failure_undetected"
    LOSS_DETECTED = "loss"


@dataclass(frozen=True)
class BellOutcome:
    kind: OutcomeKind
    label: BellLabel | None = None

    def __post_init__(self):
        if (self.kind is OutcomeKind.DETECTED) != (self.label is not None):
            raise ValueError("exactly the Detected outcome carries a label")

    def __str__(self):
        return str(self.label) if self.label is not None else self.kind.value

    @property
    def is_detected(self) -> bool:
        return self.kind is OutcomeKind.DETECTED

    @classmethod
    def detected(cls, label: BellLabel) -> "BellOutcome":
        return cls(OutcomeKind.DETECTED, label)

    @classmethod
    def parse(cls, text: str) -> "BellOutcome":
        for kind in OutcomeKind:
            if kind is not OutcomeKind.DETECTED and text == kind.value:
                return cls(kind)
        return cls.detected(BellLabel.parse(text))


FAILURE = BellOutcome(OutcomeKind.FAILURE_DETECTED)
FAILURE_UNDETECTED = BellOutcome(OutcomeKind.FAILURE_UNDETECTED)
LOSS = BellOutcome(OutcomeKind.LOSS_DETECTED)


def _unit(x, name: str) -> Prob:
    if not 0 <= x <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return x


@dataclass(frozen=True)
class BsmNoise:
    """Analyzer noise.  Values may be floats or :class:`~fractions.Fraction`."""

    f: Prob = 1
    eta: Prob = 0
    epsilon: Prob = 0

    def __post_init__(self):
        _unit(self.f, "f")
        _unit(self.eta, "eta")
        _unit(self.epsilon, "epsilon")

    @property
    def pair_loss(self) -> Prob:
        return 1 - (1 - self.eta) ** 2

    def exact(self) -> "BsmNoise":
        """The same noise with every parameter as an exact rational."""
        return BsmNoise(Fraction(self.f), Fraction(self.eta), Fraction(self.epsilon))

    @property
    def noiseless(self) -> bool:
        return self.f == 1 and self.eta == 0 and self.epsilon == 0


def _merge(items: list[tuple[BellOutcome, Prob]]) -> list[tuple[BellOutcome, Prob]]:
    acc: dict[BellOutcome, Prob] = {}
    for outcome, w in items:
        if w:
            acc[outcome] = acc.get(outcome, 0) + w
    return list(acc.items())


def analyzer_response(
    true_label: BellLabel, variant: BsmVariant, noise: BsmNoise, lost: bool = False
) -> list[tuple[BellOutcome, Prob]]:
    """Distribution of the reported outcome for a pair in ``true_label``."""
    if lost:
        return [(LOSS, 1)]
    eps = noise.epsilon
    seen = [(true_label, 1 - eps), (true_label.flipped_sign(), eps / 2), (true_label.flipped_symbol(), eps / 2)]
    out = []
    for label, w in seen:
        if label in variant.detected:
            out.append((BellOutcome.detected(label), w))
        else:
            out.append((FAILURE, w * noise.f))
            out.append((FAILURE_UNDETECTED, w * (1 - noise.f)))
    return _merge(out)


def pair_response(true_label: BellLabel, variant: BsmVariant, noise: BsmNoise) -> list[tuple[BellOutcome, Prob]]:
    """:func:`analyzer_response` averaged over photon loss at rate ``eta``."""
    ploss = noise.pair_loss
    out = [(LOSS, ploss)]
    out += [(o, w * (1 - ploss)) for o, w in analyzer_response(true_label, variant, noise)]
    return _merge(out)


def noiseless_outcome(true_label: BellLabel, variant: BsmVariant) -> BellOutcome:
    return BellOutcome.detected(true_label) if true_label in variant.detected else FAILURE


def _sample(dist: list[tuple[BellOutcome, Prob]], rng: np.random.Generator) -> BellOutcome:
    u = rng.random()
    acc = 0.0
    for outcome, w in dist:
        acc += float(w)
        if u < acc:
            return outcome
    return dist[-1][0]


def _bell_branches(state: PureState, i: int, j: int):
    # loss-aware path: lost photons are still consumed by the analyzer
    cleared = PureState(state.amplitudes)
    lost_rest = tuple(f for k, f in enumerate(state.lost) if k not in (i, j))
    for idx, prob, post in enumerate_two_photon(cleared, i, j, BELL_KETS):
        if post is not None:
            post = PureState(post.amplitudes, lost_rest)
        yield BELL_BASIS[idx], prob, post


def measure_bell_branches(
    state: PureState, i: int, j: int, variant: BsmVariant, noise: BsmNoise
) -> list[tuple[BellOutcome, BellLabel, float, Prob, PureState]]:
    """All ``(outcome, true_label, born_prob, record_prob, post_state)`` branches.

    ``born_prob`` is the Born weight of the collapse onto ``true_label``;
    ``record_prob`` is the classical probability of the reported outcome
    given that collapse (loss, flips, failure detection).
    """
    _check_pair(state, i, j)
    already_lost = state.lost[i] or state.lost[j]
    out = []
    for label, born, post in _bell_branches(state, i, j):
        if post is None:
            continue
        dist = analyzer_response(label, variant, noise, lost=True) if already_lost \
            else pair_response(label, variant, noise)
        for outcome, w in dist:
            out.append((outcome, label, born, w, post))
    return out


def _check_pair(state: PureState, i: int, j: int) -> None:
    n = state.num_photons
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise StateError(f"invalid photon pair ({i}, {j}) for {n} photons")


def measure_bell(
    state: PureState, i: int, j: int, variant: BsmVariant, noise: BsmNoise, rng: np.random.Generator
) -> tuple[BellOutcome, PureState, BellLabel]:
    """Sample one analyzer run on photons ``i, j``.

    Returns the reported outcome, the state of the remaining photons and the
    Bell label the pair actually collapsed onto (never announced).
    """
    _check_pair(state, i, j)
    lost = state.lost[i] or state.lost[j]
    if not lost and noise.eta:
        lost = bool(rng.random() < float(noise.pair_loss))
    branches = [b for b in _bell_branches(state, i, j) if b[2] is not None]
    probs = np.array([b[1] for b in branches])
    label, _, post = branches[int(rng.choice(len(branches), p=probs / probs.sum()))]
    outcome = _sample(analyzer_response(label, variant, noise, lost=lost), rng)
    return outcome, post, label
