"""Query-time verification: the engine's answer checker.

Every draft sentence must cite a chunk that exists and must embed close
enough to its cited source. Verification is strip-and-warn, never
regenerate: flagged sentences are removed, and if nothing survives the
answer degrades to a refusal shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .models import CONFLICT_WARNING, DISSENT_WARNING, SynthesisRecord
from .store import Store
from .textutil import extract_markers, split_cited_sentences, strip_markers

DEFAULT_GAMMA = 0.55


@dataclass
class VerifyFinding:
    sentence_index: int
    kind: str  # fabricated_citation | ungrounded | uncited
    message: str


@dataclass
class FinalizedDraft:
    text: str
    chunk_ids: list[str]
    warnings: list[str] = field(default_factory=list)
    all_stripped: bool = False


def verify_citations(answer_draft: str, store: Store) -> list[VerifyFinding]:
    findings = []
    for i, sentence in enumerate(split_cited_sentences(answer_draft)):
        for marker in extract_markers(sentence):
            if marker not in store.chunks:
                findings.append(
                    VerifyFinding(i, "fabricated_citation", f"citation [{marker}] does not dereference")
                )
    return findings


def _cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return dot / (nu * nv)


def verify_grounding(
    answer_draft: str,
    retrieved_context: list[tuple[str, str, float]],
    embedder,
    gamma: float = DEFAULT_GAMMA,
) -> list[VerifyFinding]:
    findings = []
    context_vecs: dict[str, list[float]] = {}
    for chunk_id, text, _score in retrieved_context:
        context_vecs[chunk_id] = embedder.embed_texts([text])[0]
    for i, sentence in enumerate(split_cited_sentences(answer_draft)):
        markers = extract_markers(sentence)
        if not markers:
            findings.append(VerifyFinding(i, "uncited", "sentence carries no citation marker"))
            continue
        bare = strip_markers(sentence)
        if not bare:
            continue
        try:
            sent_vec = embedder.embed_texts([bare])[0]
        except Exception:
            findings.append(VerifyFinding(i, "ungrounded", "sentence is unembeddable"))
            continue
        best = max(
            (_cosine(sent_vec, context_vecs[m]) for m in markers if m in context_vecs),
            default=0.0,
        )
        if best < gamma:
            findings.append(
                VerifyFinding(i, "ungrounded", f"sentence similarity {best:.3f} below threshold {gamma}")
            )
    return findings


def finalize(
    answer_draft: str,
    findings: list[VerifyFinding],
    synthesis_context: Optional[Sequence[SynthesisRecord]] = None,
) -> FinalizedDraft:
    flagged = {f.sentence_index for f in findings}
    sentences = split_cited_sentences(answer_draft)
    survivors = [s for i, s in enumerate(sentences) if i not in flagged]

    warnings: list[str] = []
    if not survivors:
        if sentences:
            warnings.append("all generated content failed verification")
        return FinalizedDraft(text="", chunk_ids=[], warnings=warnings, all_stripped=bool(sentences))

    chunk_ids: list[str] = []
    for s in survivors:
        for marker in extract_markers(s):
            if marker not in chunk_ids:
                chunk_ids.append(marker)

    for record in synthesis_context or []:
        if record.contradiction_flag and CONFLICT_WARNING not in warnings:
            warnings.append(CONFLICT_WARNING)
        elif not record.contradiction_flag and record.agreement_ratio < 1.0 and DISSENT_WARNING not in warnings:
            warnings.append(DISSENT_WARNING)

    return FinalizedDraft(text=" ".join(survivors), chunk_ids=chunk_ids, warnings=warnings)
