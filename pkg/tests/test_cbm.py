import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from teleshare.bsm import FAILURE, FAILURE_UNDETECTED, LOSS, BellOutcome, BsmNoise, BsmVariant
from teleshare.cbm import (
    HONEST,
    AdversaryModel,
    Level1Kind,
    Level1Result,
    SimFidelity,
    Strategy,
    bsm_level1,
    bsm_level2,
    enumerate_ft,
    level1_branches,
    logical_from_hidden,
    logical_symbol_correct,
    majority_vote_sign,
    next_variant,
    outcome_probabilities,
    run_ft_teleportation,
    sign_votes,
)
from teleshare.encoding import (
    BELL_BASIS,
    BellLabel,
    EncodingParams,
    Level,
    PHI_MINUS,
    PHI_PLUS,
    PSI_MINUS,
    PSI_PLUS,
    SecretSpec,
    Sign,
    Symbol,
    all_labels,
    decompose_logical_bell,
)
from teleshare.kernels import MCConfig, estimate_success
from teleshare.protocol import INCONSISTENT, PROTOCOL_FAILURE, LogicalBellOutcome
from teleshare.qstate import StateError

PLUS, MINUS = Sign.PLUS, Sign.MINUS
PHI, PSI = Symbol.PHI, Symbol.PSI
S = Level1Result.success
SO = Level1Result.sign_only
F = Level1Result.failure


def block_patterns(label, p):
    return [parts for parts, _ in decompose_logical_bell(label.at(Level.BLOCK), EncodingParams.parity(1, p))]


class TestLevel1Examples:
    @pytest.mark.parametrize("pattern", block_patterns(BellLabel(PHI, PLUS), 2))
    def test_phi_plus_block(self, pattern):
        assert bsm_level1(pattern, q=1) == S(PHI, PLUS)

    def test_all_lost_is_failure(self):
        res = bsm_level1([PHI_PLUS, PHI_PLUS], q=1, lost=[True, True])
        assert res.kind is Level1Kind.FAILURE

    def test_one_lost_pair_with_clean_bminus(self):
        # Bpsi sees a loss, the fallback variant is B-, two clean runs follow
        for pattern in block_patterns(BellLabel(PSI, MINUS), 3):
            res = bsm_level1(pattern, q=2, lost=[True, False, False], fallback=BsmVariant.BMINUS)
            assert res == SO(MINUS)
            assert [v for v, _ in res.raw] == [BsmVariant.BPSI, BsmVariant.BMINUS, BsmVariant.BMINUS]

    def test_audit_flag(self):
        res = bsm_level1([PSI_PLUS, PHI_PLUS, PHI_PLUS], q=2, lost=[False, True, True])
        assert res == SO(PLUS) and res.audit

    def test_q_range(self):
        with pytest.raises(ValueError):
            bsm_level1([PHI_PLUS, PHI_PLUS], q=2)

    def test_empty_block(self):
        with pytest.raises(ValueError):
            bsm_level1([], q=0)

    def test_str(self):
        assert str(S(PHI, MINUS)) == "phi-_(p)"
        assert str(SO(PLUS)) == "+"
        assert str(F()) == "failure"


class TestMajority:
    @pytest.mark.parametrize("votes, expected", [
        ([MINUS, MINUS, PLUS], (MINUS, False)),
        ([PLUS], (PLUS, False)),
        ([PLUS, MINUS], (PLUS, True)),
    ])
    def test_votes(self, votes, expected):
        assert majority_vote_sign(votes) == expected

    def test_raw_records(self):
        raw = ((BsmVariant.BPSI, BellOutcome.detected(PSI_MINUS)),
               (BsmVariant.BMINUS, FAILURE),
               (BsmVariant.BMINUS, BellOutcome.detected(PHI_MINUS)))
        assert sign_votes(raw) == [MINUS, PLUS, MINUS]
        assert majority_vote_sign(raw) == (MINUS, False)

    def test_no_votes(self):
        with pytest.raises(ValueError):
            majority_vote_sign([])
        with pytest.raises(ValueError):
            majority_vote_sign(((BsmVariant.BPSI, FAILURE),))


class TestLevel2:
    def test_sign_parity(self):
        assert bsm_level2([S(PHI, MINUS), SO(PLUS), SO(MINUS)]) == LogicalBellOutcome.of(PHI, PLUS)

    def test_no_success(self):
        assert bsm_level2([SO(PLUS), SO(PLUS)]) == PROTOCOL_FAILURE

    def test_failure(self):
        assert bsm_level2([S(PHI, PLUS), F()]) == PROTOCOL_FAILURE

    def test_mixed_symbols(self):
        assert bsm_level2([S(PHI, PLUS), S(PSI, PLUS)]) == INCONSISTENT

    def test_empty(self):
        with pytest.raises(ValueError):
            bsm_level2([])

    def test_symbol_majority(self):
        out = logical_symbol_correct([S(PHI, PLUS), S(PHI, MINUS), S(PSI, PLUS)])
        assert out.label == BellLabel(PHI, MINUS, Level.LOGICAL)
        assert out.overruled == 1

    def test_symbol_tie(self):
        assert logical_symbol_correct([S(PHI, PLUS), S(PSI, PLUS)]) == INCONSISTENT

    def test_symbol_correct_without_success(self):
        assert logical_symbol_correct([SO(PLUS)]) == PROTOCOL_FAILURE


class TestAdversary:
    @pytest.mark.parametrize("strategy, before, after", [
        (Strategy.FLIP_SIGN, S(PHI, PLUS), S(PHI, MINUS)),
        (Strategy.FLIP_SIGN, SO(MINUS), SO(PLUS)),
        (Strategy.FLIP_SIGN, F(), F()),
        (Strategy.FLIP_SYMBOL, S(PHI, PLUS), S(PSI, PLUS)),
        (Strategy.FLIP_SYMBOL, SO(PLUS), SO(PLUS)),
        (Strategy.REPORT_FAILURE, S(PSI, MINUS), F()),
    ])
    def test_strategies(self, strategy, before, after):
        adv = AdversaryModel({1}, strategy)
        assert adv.announce(1, before) == after
        assert adv.announce(2, before) == before

    def test_random_branches(self):
        branches = AdversaryModel({1}, Strategy.RANDOM).announce_branches(1, S(PHI, PLUS))
        assert {r for r, _ in branches} == {S(PHI, MINUS), S(PSI, PLUS), F()}
        assert sum(w for _, w in branches) == 1

    def test_membership(self):
        with pytest.raises(ValueError):
            AdversaryModel({4}).check(3)
        with pytest.raises(ValueError):
            AdversaryModel({0})


# policy state machine, written as an explicit table:
# state -> event -> next state; states are ("psi", failures so far) or a B± variant
def reference_table(q, fallback):
    table = {}
    for c in range(max(q, 1)):
        nxt_fail = ("psi", c + 1) if c + 1 < q else fallback
        table[("psi", c)] = {
            "psi+": BsmVariant.BPLUS, "psi-": BsmVariant.BMINUS,
            "fail": nxt_fail, "loss": fallback,
        }
    for v in (BsmVariant.BPLUS, BsmVariant.BMINUS):
        table[v] = {e: v for e in ("det", "fail", "loss")}
    return table


def event_of(variant, outcome):
    if outcome.kind.value in ("loss", "failure_undetected"):
        return "loss"
    if not outcome.is_detected:
        return "fail"
    return str(outcome.label) if variant is BsmVariant.BPSI else "det"


def as_variant(state):
    return BsmVariant.BPSI if isinstance(state, tuple) else state


@given(
    st.integers(1, 5).flatmap(lambda p: st.tuples(st.just(p), st.integers(0, p - 1))),
    st.sampled_from([BsmVariant.BPLUS, BsmVariant.BMINUS]),
    st.integers(0, 2**32 - 1),
    st.fractions(0, Fraction(1, 2), max_denominator=20),
    st.fractions(0, Fraction(1, 2), max_denominator=20),
)
def test_policy_matches_reference_table(pq, fallback, seed, eta, f):
    p, q = pq
    rng = np.random.default_rng(seed)
    labels = [BELL_BASIS[i] for i in rng.integers(0, 4, size=p)]
    res = bsm_level1(labels, q, BsmNoise(f=1 - f, eta=eta), rng, fallback=fallback)
    table = reference_table(q, fallback)
    state = ("psi", 0) if q > 0 else fallback
    for variant, outcome in res.raw:
        assert variant is as_variant(state)
        state = table[state][event_of(variant, outcome)]


@given(st.lists(st.sampled_from([BellOutcome.detected(PSI_PLUS), BellOutcome.detected(PSI_MINUS), FAILURE,
                                 FAILURE_UNDETECTED, LOSS]), max_size=4), st.integers(0, 4))
def test_next_variant_on_arbitrary_bpsi_records(outcomes, q):
    table = reference_table(q, BsmVariant.BPLUS)
    state = ("psi", 0) if q > 0 else BsmVariant.BPLUS
    raw = ()
    for o in outcomes:
        variant = next_variant(raw, q)
        assert variant is as_variant(state)
        if variant is not BsmVariant.BPSI:
            o = BellOutcome.detected(PHI_PLUS) if o.is_detected else o
        raw += ((variant, o),)
        state = table[state][event_of(variant, o)]


class TestNoiselessBehaviour:
    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_sign_always_right_and_success_when_expected(self, p):
        for q in range(p):
            for label in all_labels(Level.BLOCK):
                for pattern in block_patterns(label, p):
                    (res, w), = level1_branches(pattern, q, BsmNoise())
                    assert w == 1
                    assert res.sign is label.sign
                    if res.kind is Level1Kind.SUCCESS:
                        assert res.symbol is label.symbol
                    else:
                        # only a minus block whose first q pairs all fail Bpsi
                        assert res.kind is Level1Kind.SIGN_ONLY
                        assert label.sign is MINUS
                        assert all(lb.symbol is PHI for lb in pattern[:q])

    def test_success_rate_of_minus_blocks(self):
        p, q = 3, 2
        label = BellLabel(PHI, MINUS)
        pats = block_patterns(label, p)
        ok = sum(bsm_level1(pt, q).kind is Level1Kind.SUCCESS for pt in pats)
        assert Fraction(ok, len(pats)) == Fraction(3, 4)


@given(st.sampled_from(list(BELL_BASIS)), st.integers(1, 4), st.fractions(0, 1, max_denominator=10),
       st.fractions(0, Fraction(1, 2), max_denominator=10), st.fractions(0, Fraction(1, 3), max_denominator=10))
def test_level1_branches_form_distribution(label, p, f, eta, eps):
    labels = [label] * p
    total = sum(w for _, w in level1_branches(labels, p - 1, BsmNoise(f, eta, eps)))
    assert total == 1


class TestPipeline:
    @pytest.mark.parametrize("n, p", [(1, 2), (2, 1), (2, 2)])
    @pytest.mark.parametrize("eta", [0, Fraction(1, 10)])
    def test_modes_agree(self, n, p, eta, secret):
        enc = EncodingParams.parity(n, p)
        a = outcome_probabilities(enumerate_ft(secret, enc, 1, BsmNoise(eta=eta), sim=SimFidelity.LABEL))
        b = outcome_probabilities(enumerate_ft(secret, enc, 1, BsmNoise(eta=eta), sim=SimFidelity.EXACT))
        for k in a:
            assert abs(float(a[k]) - float(b[k])) < 1e-10

    def test_noiseless_fidelity(self, secret):
        for sim in SimFidelity:
            for b in enumerate_ft(secret, EncodingParams.parity(2, 2), 2, sim=sim):
                if b.logical.identified:
                    assert b.fidelity == pytest.approx(1, abs=1e-10)
                    assert b.correct

    def test_label_mode_rational(self, secret):
        probs = outcome_probabilities(enumerate_ft(secret, EncodingParams.parity(2, 2), sim=SimFidelity.LABEL))
        assert probs["success"] == Fraction(15, 16)

    def test_logical_from_hidden(self):
        enc = EncodingParams.parity(2, 2)
        labels = (PSI_MINUS, PHI_MINUS, PHI_PLUS, PSI_PLUS)
        assert logical_from_hidden(labels, enc) == BellLabel(PSI, MINUS, Level.LOGICAL)

    def test_ghz_encoding_rejected(self, secret):
        with pytest.raises(ValueError):
            enumerate_ft(secret, EncodingParams.ghz(2))

    def test_exact_budget(self, secret):
        with pytest.raises(StateError):
            enumerate_ft(secret, EncodingParams.parity(3, 4), 1, sim=SimFidelity.EXACT)

    def test_sampling_is_deterministic(self, secret):
        enc = EncodingParams.parity(2, 2)
        a = run_ft_teleportation(secret, enc, noise=BsmNoise(eta=0.1), seed=5, trial=3).to_json()
        b = run_ft_teleportation(secret, enc, noise=BsmNoise(eta=0.1), seed=5, trial=3).to_json()
        assert a == b

    @pytest.mark.parametrize("sim", list(SimFidelity))
    def test_sampled_runs_recover_secret(self, sim, secret):
        enc = EncodingParams.parity(2, 2)
        for t in range(40):
            tr = run_ft_teleportation(secret, enc, 1, sim=sim, seed=2, trial=t)
            if tr.succeeded:
                assert tr.fidelity == pytest.approx(1, abs=1e-10)

    def test_one_survivor_per_qubit_at_one_sender(self, secret):
        # sender 1 keeps only its last pair, sender 2 is loss-free
        enc = EncodingParams.parity(2, 3)
        lost = [True, True, False, False, False, False]
        seen_identified = 0
        for t in range(200):
            tr = run_ft_teleportation(secret, enc, 1, sim=SimFidelity.LABEL, seed=8, trial=t, lost=lost)
            r1, r2 = tr.extra["level1"]
            assert r1 in ("+", "-")
            if r2 not in ("+", "-", "failure"):
                assert tr.succeeded and tr.fidelity == pytest.approx(1)
                seen_identified += 1
        assert seen_identified > 150

    def test_lost_flags_length(self, secret):
        with pytest.raises(ValueError):
            run_ft_teleportation(secret, EncodingParams.parity(1, 2), lost=[True])


@pytest.mark.slow
@pytest.mark.parametrize("eta", [0, 0.05, 0.1])
def test_success_monotone_in_blocks(eta):
    rates = []
    for n in (1, 2, 3):
        est = estimate_success(MCConfig(EncodingParams.parity(n, 3), 1, BsmNoise(eta=eta)), 100_000, 11)
        rates.append(est["success"])
    for (r0, s0), (r1, s1) in zip(rates, rates[1:]):
        assert r1 >= r0 - 3 * (s0**2 + s1**2) ** 0.5, rates
