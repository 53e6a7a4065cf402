import pytest

from apengine.models import (
    CONFLICT_WARNING,
    DISSENT_WARNING,
    Author,
    Chunk,
    Publication,
    SynthesisRecord,
)
from apengine.providers import CompositionRequest, MockProvider
from apengine.store import open_store
from apengine.verify import finalize, verify_citations, verify_grounding


@pytest.fixture
def store(tmp_path):
    st = open_store(tmp_path / "store")
    pub = Publication(pub_id="ap:aaaaaaaaaaaa", version=1, title="T",
                      authors=[Author(name="A")], date="2020-01-01")
    chunk = Chunk(chunk_id="ap:aaaaaaaaaaaa#v1#c0", pub_id="ap:aaaaaaaaaaaa", version=1,
                  section="results", ordinal=0,
                  text="Aspirin reduced stroke risk in the cohort.", word_count=7)
    st.put_publication(pub, [chunk], [], [])
    return st


GOOD = "ap:aaaaaaaaaaaa#v1#c0"
CONTEXT = [(GOOD, "Aspirin reduced stroke risk in the cohort.", 0.9)]


class TestVerifyCitations:
    def test_real_citation_passes(self, store):
        assert verify_citations(f"Aspirin reduced stroke risk. [{GOOD}]", store) == []

    def test_fabricated_citation_flagged(self, store):
        findings = verify_citations("Aspirin cures everything. [ap:ffffffffffff#v1#c0]", store)
        assert len(findings) == 1
        assert findings[0].kind == "fabricated_citation"
        assert findings[0].sentence_index == 0

    def test_mixed_sentences_indexed(self, store):
        draft = f"Good sentence. [{GOOD}] Bad sentence. [ap:ffffffffffff#v1#c9]"
        findings = verify_citations(draft, store)
        assert [f.sentence_index for f in findings] == [1]


class TestVerifyGrounding:
    def embedder(self):
        return MockProvider()

    def test_extractive_sentence_grounds(self, store):
        draft = f"Aspirin reduced stroke risk in the cohort. [{GOOD}]"
        assert verify_grounding(draft, CONTEXT, self.embedder()) == []

    def test_lying_sentence_flagged(self):
        draft = f"Bananas improve saxophone skills enormously. [{GOOD}]"
        findings = verify_grounding(draft, CONTEXT, self.embedder())
        assert len(findings) == 1 and findings[0].kind == "ungrounded"

    def test_uncited_sentence_flagged(self):
        findings = verify_grounding("No marker here at all.", CONTEXT, self.embedder())
        assert len(findings) == 1 and findings[0].kind == "uncited"

    def test_gamma_adjustable(self):
        draft = f"Aspirin reduced risk. [{GOOD}]"
        strict = verify_grounding(draft, CONTEXT, self.embedder(), gamma=0.999)
        lax = verify_grounding(draft, CONTEXT, self.embedder(), gamma=0.0)
        assert strict and not lax


class TestFinalize:
    def test_clean_draft_unchanged(self):
        draft = f"One sentence. [{GOOD}]"
        out = finalize(draft, [])
        assert out.text == draft
        assert out.chunk_ids == [GOOD]
        assert out.warnings == [] and not out.all_stripped

    def test_flagged_sentence_stripped(self, store):
        draft = f"Good one. [{GOOD}] Fabricated one. [ap:ffffffffffff#v1#c0]"
        out = finalize(draft, verify_citations(draft, store))
        assert out.text == f"Good one. [{GOOD}]"
        assert out.chunk_ids == [GOOD]

    def test_everything_stripped(self, store):
        draft = "Fabricated claim. [ap:ffffffffffff#v1#c0]"
        out = finalize(draft, verify_citations(draft, store))
        assert out.text == "" and out.all_stripped
        assert out.warnings == ["all generated content failed verification"]

    def test_empty_draft_not_flagged_as_stripped(self):
        out = finalize("", [])
        assert out.text == "" and not out.all_stripped and out.warnings == []

    def test_conflict_warning_from_synthesis(self):
        rec = SynthesisRecord(
            group="g", subject="s", relation="r", object_key="o", n_studies=2,
            pooled_estimate=0.0, pooled_se=0.1, ci95=(-0.2, 0.2), agreement_ratio=0.5,
            confidence="low", contradiction_flag=True, computed_at="2020-01-01T00:00:00Z", inputs=[],
        )
        out = finalize(f"A sentence. [{GOOD}]", [], synthesis_context=[rec])
        assert out.warnings == [CONFLICT_WARNING]

    def test_dissent_warning_when_agreement_below_one(self):
        rec = SynthesisRecord(
            group="g", subject="s", relation="r", object_key="o", n_studies=5,
            pooled_estimate=0.05, pooled_se=0.01, ci95=(0.03, 0.07), agreement_ratio=0.8,
            confidence="medium", contradiction_flag=False, computed_at="2020-01-01T00:00:00Z", inputs=[],
        )
        out = finalize(f"A sentence. [{GOOD}]", [], synthesis_context=[rec])
        assert out.warnings == [DISSENT_WARNING]

    def test_verification_idempotent(self, store):
        draft = f"Good one. [{GOOD}] Fabricated one. [ap:ffffffffffff#v1#c0]"
        once = finalize(draft, verify_citations(draft, store))
        twice = finalize(once.text, verify_citations(once.text, store))
        assert twice.text == once.text
        assert twice.chunk_ids == once.chunk_ids


def test_extractive_composition_survives_verification(store):
    """The mock composer's output is a fixpoint of the verifier."""
    provider = MockProvider()
    draft = provider.compose_answer(
        CompositionRequest(question="did aspirin reduce stroke risk", context=CONTEXT, zoom="abstract")
    )
    assert verify_citations(draft, store) == []
    assert verify_grounding(draft, CONTEXT, provider) == []
    out = finalize(draft, [])
    assert out.text == draft
