import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedtrust.decision_tree import Prediction, TrustStatus
from fedtrust.dempster_shafer import (
    VACUOUS,
    Belief,
    BeliefMass,
    EvidenceConflictError,
    TrustDecision,
    aggregate,
    combine,
    decide,
    make_bpa,
)

YES = TrustStatus.TRUSTWORTHY
NO = TrustStatus.UNTRUSTWORTHY


@st.composite
def masses(draw):
    m1 = draw(st.floats(min_value=0.0, max_value=1.0))
    m2 = draw(st.floats(min_value=0.0, max_value=1.0 - m1))
    return BeliefMass(m1=m1, m2=m2, m3=1.0 - m1 - m2)


class TestMakeBpa:
    def test_trustworthy_prediction(self):
        m = make_bpa(Prediction(label=YES, confidence=1.0), credibility=0.8)
        assert m.m1 == pytest.approx(0.8)
        assert m.m2 == 0.0
        assert m.m3 == pytest.approx(0.2)

    def test_zero_credibility_is_vacuous(self):
        m = make_bpa(Prediction(label=NO, confidence=1.0), credibility=0.0)
        assert m == VACUOUS

    def test_weight_is_credibility_times_confidence(self):
        m = make_bpa(Prediction(label=YES, confidence=0.5), credibility=0.6)
        assert m.m1 == pytest.approx(0.3)
        assert m.m3 == pytest.approx(0.7)

    def test_untrustworthy_mass_goes_to_m2(self):
        m = make_bpa(Prediction(label=NO, confidence=0.9), credibility=1.0)
        assert m.m1 == 0.0
        assert m.m2 == pytest.approx(0.9)

    def test_out_of_range_credibility_rejected(self):
        with pytest.raises(ValueError):
            make_bpa(Prediction(label=YES, confidence=1.0), credibility=1.5)
        with pytest.raises(ValueError):
            make_bpa(Prediction(label=YES, confidence=1.0), credibility=-0.1)


class TestCombine:
    def test_two_agreeing_sources_reinforce(self):
        m = BeliefMass(m1=0.6, m2=0.0, m3=0.4)
        out = combine(m, m)
        assert out.m1 == pytest.approx(0.84)
        assert out.m2 == 0.0
        assert out.m3 == pytest.approx(0.16)

    def test_vacuous_is_identity(self):
        m = BeliefMass(m1=0.3, m2=0.25, m3=0.45)
        assert combine(m, VACUOUS) == m
        assert combine(VACUOUS, m) == m

    def test_conflicting_sources_renormalize(self):
        a = BeliefMass(m1=0.8, m2=0.0, m3=0.2)
        b = BeliefMass(m1=0.0, m2=0.5, m3=0.5)
        out = combine(a, b)
        assert out.m1 == pytest.approx(0.6667, abs=1e-4)
        assert out.m2 == pytest.approx(0.1667, abs=1e-4)
        assert out.m3 == pytest.approx(0.1667, abs=1e-4)

    def test_total_conflict_raises(self):
        certain_yes = BeliefMass(m1=1.0, m2=0.0, m3=0.0)
        certain_no = BeliefMass(m1=0.0, m2=1.0, m3=0.0)
        with pytest.raises(EvidenceConflictError):
            combine(certain_yes, certain_no)

    @given(masses(), masses())
    def test_mass_conservation(self, a, b):
        try:
            out = combine(a, b)
        except EvidenceConflictError:
            return
        assert out.m1 + out.m2 + out.m3 == pytest.approx(1.0, abs=1e-9)

    @given(masses(), masses())
    def test_commutativity(self, a, b):
        try:
            ab = combine(a, b)
        except EvidenceConflictError:
            return
        ba = combine(b, a)
        assert ab.m1 == pytest.approx(ba.m1, abs=1e-12)
        assert ab.m2 == pytest.approx(ba.m2, abs=1e-12)
        assert ab.m3 == pytest.approx(ba.m3, abs=1e-12)

    @given(masses(), masses(), masses())
    def test_associativity(self, a, b, c):
        try:
            left = combine(combine(a, b), c)
            right = combine(a, combine(b, c))
        except EvidenceConflictError:
            return
        assert left.m1 == pytest.approx(right.m1, abs=1e-9)
        assert left.m2 == pytest.approx(right.m2, abs=1e-9)
        assert left.m3 == pytest.approx(right.m3, abs=1e-9)

    @given(masses(), masses())
    def test_agreement_reinforces(self, a, b):
        # both sources favor trustworthiness and commit no opposing mass
        a = BeliefMass(m1=a.m1 + a.m2, m2=0.0, m3=a.m3)
        b = BeliefMass(m1=b.m1 + b.m2, m2=0.0, m3=b.m3)
        out = combine(a, b)
        assert out.m1 >= max(a.m1, b.m1) - 1e-12


class TestAggregate:
    def test_single_mass_passes_through(self):
        belief = aggregate([BeliefMass(m1=0.7, m2=0.0, m3=0.3)])
        assert belief.t == pytest.approx(0.7)
        assert belief.n == 0.0
        assert belief.u == pytest.approx(0.3)

    def test_fold_matches_pairwise_combine(self):
        m = BeliefMass(m1=0.6, m2=0.0, m3=0.4)
        belief = aggregate([m, m])
        assert belief.t == pytest.approx(0.84)
        assert belief.u == pytest.approx(0.16)

    def test_all_vacuous_stays_uncertain(self):
        belief = aggregate([VACUOUS, VACUOUS, VACUOUS])
        assert belief == Belief(t=0.0, n=0.0, u=1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_conflict_propagates(self):
        with pytest.raises(EvidenceConflictError):
            aggregate(
                [BeliefMass(m1=1.0, m2=0.0, m3=0.0), BeliefMass(m1=0.0, m2=1.0, m3=0.0)]
            )

    @given(st.lists(masses(), min_size=1, max_size=6))
    def test_belief_sums_to_one(self, mass_list):
        try:
            belief = aggregate(mass_list)
        except EvidenceConflictError:
            return
        assert belief.t + belief.n + belief.u == pytest.approx(1.0, abs=1e-9)


class TestDecide:
    def test_strong_trust(self):
        d = decide(Belief(t=0.84, n=0.0, u=0.16))
        assert d == TrustDecision(trustworthy=True, server_trust=0.84)

    def test_no_evidence_rejects(self):
        d = decide(Belief(t=0.0, n=0.0, u=1.0))
        assert not d.trustworthy
        assert d.server_trust == 0.0

    def test_distrust_dominates(self):
        assert not decide(Belief(t=0.3, n=0.5, u=0.2)).trustworthy

    def test_exact_tie_rejects(self):
        assert not decide(Belief(t=0.4, n=0.4, u=0.2)).trustworthy
