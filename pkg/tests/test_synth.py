import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apengine.errors import MixedUnitsError
from apengine.graph import KnowledgeGraph
from apengine.models import ClaimSource, ClaimTriple, Effect, LiteralObject
from apengine.store import open_store
from apengine.synth import Synthesizer, agreement_ratio, confidence_label, pool_effects


def claim(estimate=None, se=None, polarity="supports", unit=None, pub="ap:000000000000"):
    eff = Effect(estimate, se) if estimate is not None else None
    return ClaimTriple(
        claim_id=f"clm:{random.getrandbits(48):012x}", subject="ent:s", relation="affects",
        object=LiteralObject(1.0, "u"), source=ClaimSource(pub, 1, []),
        effect=eff, polarity=polarity, unit=unit,
    )


def oracle_pool(pairs):
    """Independent fixed-effect oracle."""
    ws = [1.0 / se**2 for _, se in pairs]
    est = sum(w * x for w, (x, _) in zip(ws, pairs)) / sum(ws)
    return est, math.sqrt(1.0 / sum(ws))


class TestPooling:
    def test_single_study_identity(self):
        est, se = pool_effects([claim(0.07, 0.03)])
        assert est == pytest.approx(0.07) and se == pytest.approx(0.03)

    def test_two_studies_derived(self):
        # [DERIVED] w = 2500, 625; pooled = (2500*0.04 + 625*0.08)/3125 = 0.048
        # se = sqrt(1/3125) = 0.01788854...
        est, se = pool_effects([claim(0.04, 0.02), claim(0.08, 0.04)])
        assert est == pytest.approx(0.048, abs=1e-12)
        assert se == pytest.approx(math.sqrt(1 / 3125), abs=1e-12)

    def test_equal_ses_average(self):
        # [DERIVED] equal weights: mean 0.06, se 0.1/sqrt(2)
        est, se = pool_effects([claim(0.05, 0.1), claim(0.07, 0.1)])
        assert est == pytest.approx(0.06, abs=1e-12)
        assert se == pytest.approx(0.1 / math.sqrt(2), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool_effects([])

    def test_non_positive_se_rejected(self):
        with pytest.raises(ValueError):
            pool_effects([claim(0.05, 0.0)])

    @given(st.lists(st.tuples(
        st.floats(-10, 10, allow_nan=False),
        st.floats(0.001, 5, allow_nan=False),
    ), min_size=1, max_size=12))
    @settings(max_examples=100)
    def test_oracle_property(self, pairs):
        claims = [claim(x, se) for x, se in pairs]
        est, se = pool_effects(claims)
        oest, ose = oracle_pool(pairs)
        assert est == pytest.approx(oest, abs=1e-9)
        assert se == pytest.approx(ose, abs=1e-9)

    @given(st.lists(st.tuples(
        st.floats(-10, 10, allow_nan=False),
        st.floats(0.001, 5, allow_nan=False),
    ), min_size=2, max_size=8), st.integers(0, 2**32))
    @settings(max_examples=50)
    def test_permutation_invariant(self, pairs, seed):
        claims = [claim(x, se) for x, se in pairs]
        est1, se1 = pool_effects(claims)
        shuffled = claims[:]
        random.Random(seed).shuffle(shuffled)
        est2, se2 = pool_effects(shuffled)
        assert est1 == pytest.approx(est2, abs=1e-9)
        assert se1 == pytest.approx(se2, abs=1e-9)

    @given(st.floats(-1, 1, allow_nan=False), st.floats(0.01, 1), st.floats(0.01, 1))
    @settings(max_examples=50)
    def test_pooled_se_never_exceeds_best_input(self, x, se_a, se_b):
        _, se = pool_effects([claim(x, se_a), claim(x, se_b)])
        assert se <= min(se_a, se_b) + 1e-12


class TestAgreement:
    def test_unanimous(self):
        assert agreement_ratio([claim(0.1, 0.02), claim(0.2, 0.02)]) == 1.0

    def test_majority(self):
        claims = [claim(0.1, 0.02)] * 4 + [claim(-0.1, 0.02)]
        assert agreement_ratio(claims) == pytest.approx(0.8)

    def test_exact_tie_is_half(self):
        assert agreement_ratio([claim(0.1, 0.02), claim(-0.1, 0.02)]) == 0.5

    def test_polarity_used_when_no_effect(self):
        claims = [claim(polarity="supports"), claim(polarity="supports"), claim(polarity="refutes")]
        assert agreement_ratio(claims) == pytest.approx(2 / 3)


class TestConfidenceLabel:
    def test_contradiction_forces_low(self):
        assert confidence_label(6, 1.0, (0.1, 0.2), contradiction_flag=True) == "low"

    def test_single_study_low(self):
        assert confidence_label(1, 1.0, (0.1, 0.2), False) == "low"

    def test_two_agreeing_significant_medium(self):
        assert confidence_label(2, 1.0, (0.01, 0.09), False) == "medium"

    def test_ci_spanning_zero_low(self):
        assert confidence_label(5, 1.0, (-0.01, 0.09), False) == "low"

    def test_five_studies_agreement_point8_medium(self):
        assert confidence_label(5, 0.8, (0.01, 0.09), False) == "medium"

    def test_six_studies_agreement_above_point8_high(self):
        assert confidence_label(6, 5 / 6, (0.01, 0.09), False) == "high"

    def test_unanimous_five_high(self):
        assert confidence_label(5, 1.0, (0.01, 0.09), False) == "high"

    def test_low_agreement_low(self):
        assert confidence_label(4, 0.5, (0.01, 0.09), False) == "low"


@pytest.fixture
def synth(tmp_path):
    store = open_store(tmp_path / "store")
    graph = KnowledgeGraph(store)
    return Synthesizer(store, graph)


def add_claims(synth, specs):
    subj = synth.graph.resolve_entity("drug", create_if_missing=True)
    for i, spec in enumerate(specs):
        c = ClaimTriple(
            claim_id="", subject=subj, relation="affects", object=LiteralObject(1.0, "u"),
            source=ClaimSource(f"ap:{i:012x}", 1, []),
            effect=Effect(spec[0], spec[1]) if spec[0] is not None else None,
            polarity=spec[2] if len(spec) > 2 else "supports",
            unit=spec[3] if len(spec) > 3 else None,
        )
        synth.graph.assert_claim(c)
    return subj


class TestSynthesizer:
    def test_refresh_persists_record(self, synth):
        subj = add_claims(synth, [(0.04, 0.02), (0.08, 0.04)])
        rec = synth.refresh(subj, "affects", "lit:1 u")
        assert rec.n_studies == 2
        assert rec.pooled_estimate == pytest.approx(0.048)
        assert rec.confidence == "medium"
        reopened = open_store(synth.store.root)
        stored = reopened.get_synthesis(rec.group)
        assert stored is not None and stored.pooled_estimate == pytest.approx(0.048)

    def test_refresh_empty_group_deletes(self, synth):
        subj = add_claims(synth, [(0.04, 0.02), (0.08, 0.04)])
        rec = synth.refresh(subj, "affects", "lit:1 u")
        assert synth.refresh(subj, "missing_relation", "lit:1 u") is None
        assert synth.store.get_synthesis(rec.group) is not None

    def test_mixed_units_raises_and_deletes(self, synth):
        subj = add_claims(synth, [(0.04, 0.02, "supports", "mg"), (0.08, 0.04, "supports", "kg")])
        with pytest.raises(MixedUnitsError):
            synth.refresh(subj, "affects", "lit:1 u")
        assert synth.store.get_synthesis(f"{subj}|affects|lit:1 u") is None

    def test_contradiction_flag_set(self, synth):
        subj = add_claims(synth, [(-0.10, 0.02), (0.12, 0.03)])
        rec = synth.refresh(subj, "affects", "lit:1 u")
        assert rec.contradiction_flag is True
        assert rec.confidence == "low"

    def test_refresh_groups_of_swallows_mixed_units(self, synth):
        subj = add_claims(synth, [(0.04, 0.02, "supports", "mg"), (0.08, 0.04, "supports", "kg")])
        refreshed = synth.refresh_groups_of("ap:000000000000", 1)
        assert f"{subj}|affects|lit:1 u" in refreshed

    def test_ci_matches_pooled_se(self, synth):
        subj = add_claims(synth, [(0.04, 0.02), (0.08, 0.04), (0.05, 0.03)])
        rec = synth.refresh(subj, "affects", "lit:1 u")
        lo, hi = rec.ci95
        assert lo == pytest.approx(rec.pooled_estimate - 1.96 * rec.pooled_se, abs=1e-12)
        assert hi == pytest.approx(rec.pooled_estimate + 1.96 * rec.pooled_se, abs=1e-12)
