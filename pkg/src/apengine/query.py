"""Retrieval-augmented answering with zoom, refusal and derivations.

The answer path: embed question, exact search, refuse below threshold,
compose extractively (or remotely), verify every sentence, attach
citations/confidence/warnings and a fixed-template derivation. Aggregate
"pooled effect of X on Y" questions route straight to the synthesis
records instead of the composer.
"""

from __future__ import annotations

import json
import re
import uuid
from typing import Optional

from .errors import NotFoundError, ProviderError
from .graph import KnowledgeGraph, normalize_relation
from .ingest import CLAIM_PREFIX, render_claim_line
from .models import (
    Answer,
    Citation,
    CONFIDENCE_SCORES,
    CONFLICT_WARNING,
    Chunk,
    DISSENT_WARNING,
    LiteralObject,
    REFUSAL_TEXT,
    SynthesisRecord,
    VersionEvent,
    ZOOM_LEVELS,
    utc_now,
)
from .providers import CompositionRequest
from .store import Store
from .synth import Synthesizer
from .textutil import normalize_name
from . import verify as verify_mod

DEFAULT_TAU_REFUSE = 0.25
_POOLED_RE = re.compile(r"\b(?:average|pooled)\s+effect\s+of\s+(.+?)\s+on\s+(.+)$", re.IGNORECASE)


class QueryEngine:
    def __init__(
        self,
        store: Store,
        index,
        graph: KnowledgeGraph,
        synthesizer: Synthesizer,
        provider,
        tau_refuse: float = DEFAULT_TAU_REFUSE,
        gamma: float = verify_mod.DEFAULT_GAMMA,
        k: int = 8,
    ):
        self.store = store
        self.index = index
        self.graph = graph
        self.synthesizer = synthesizer
        self.provider = provider
        self.tau_refuse = tau_refuse
        self.gamma = gamma
        self.k = k

    # -- retrieval -----------------------------------------------------------

    def retrieve(self, question: str, k: Optional[int] = None) -> list[tuple[Chunk, float]]:
        if not question.strip():
            raise ValueError("question is empty")
        vector = self.provider.embed_texts([question])[0]
        hits = self.index.search(vector, k=k or self.k, include_superseded=False)
        return [(self.store.chunks[cid], score) for cid, score in hits if cid in self.store.chunks]

    # -- answering -----------------------------------------------------------

    def answer(
        self,
        question: str,
        zoom: str = "abstract",
        tau_refuse: Optional[float] = None,
        log: bool = True,
    ) -> Answer:
        if zoom not in ZOOM_LEVELS:
            raise ValueError(f"unknown zoom level {zoom!r}")
        tau = self.tau_refuse if tau_refuse is None else tau_refuse
        query_id = "q:" + uuid.uuid4().hex[:16]

        def done(ans: Answer) -> Answer:
            return self._log(ans) if log else ans

        retrieved = self.retrieve(question)
        if not retrieved or retrieved[0][1] < tau:
            return done(self._refusal(query_id, question, zoom))

        pooled = self._pooled_effect_answer(query_id, question, zoom)
        if pooled is not None:
            return done(pooled)

        context = [(chunk.chunk_id, chunk.text, score) for chunk, score in retrieved]
        req = CompositionRequest(question=question, context=context, zoom=zoom)
        try:
            draft = self.provider.compose_answer(req)
        except ProviderError:
            refusal = self._refusal(query_id, question, zoom)
            refusal.warnings.append("composition backend unavailable")
            return done(refusal)

        findings = verify_mod.verify_citations(draft, self.store)
        findings += verify_mod.verify_grounding(draft, context, self.provider, self.gamma)
        synthesis_context = self._synthesis_for_chunks([cid for cid, _t, _s in context])
        final = verify_mod.finalize(draft, findings, synthesis_context)
        if not final.text:
            refusal = self._refusal(query_id, question, zoom)
            refusal.warnings.extend(final.warnings)
            return done(refusal)

        score_by_chunk = {cid: score for cid, _t, score in context}
        citations = []
        for cid in final.chunk_ids:
            chunk = self.store.chunks[cid]
            citations.append(Citation(chunk.pub_id, chunk.version, cid, score_by_chunk.get(cid, 0.0)))

        cited_synthesis = self._synthesis_for_chunks(final.chunk_ids)
        confidence = self._confidence(question, citations, cited_synthesis)
        warnings = list(final.warnings)
        for pub_key in {(c.pub_id, c.version) for c in citations}:
            pub = self.store.publications.get(pub_key)
            if pub is not None and pub.status == "flagged":
                note = f"cited publication {pub_key[0]}@v{pub_key[1]} carries validation warnings"
                if note not in warnings:
                    warnings.append(note)

        data_points = self._data_points(final.chunk_ids) if zoom == "data" else None
        answer = Answer(
            query_id=query_id,
            question=question,
            zoom=zoom,
            text=final.text,
            citations=citations,
            confidence=confidence,
            confidence_score=CONFIDENCE_SCORES[confidence],
            warnings=warnings,
            derivation=self.build_derivation(citations),
            data_points=data_points,
            refused=False,
        )
        return done(answer)

    def _refusal(self, query_id: str, question: str, zoom: str) -> Answer:
        return Answer(
            query_id=query_id,
            question=question,
            zoom=zoom,
            text=REFUSAL_TEXT,
            citations=[],
            confidence="low",
            confidence_score=CONFIDENCE_SCORES["low"],
            warnings=[],
            derivation="",
            data_points=None,
            refused=True,
        )

    def _log(self, answer: Answer) -> Answer:
        details = json.dumps(
            {
                "query_id": answer.query_id,
                "question": answer.question,
                "zoom": answer.zoom,
                "refused": answer.refused,
                "cited": [c.chunk_id for c in answer.citations],
                "confidence": answer.confidence,
            },
            ensure_ascii=False,
        )
        self.store.append_event(
            VersionEvent(timestamp=utc_now(), actor="query", action="query", subject_id=answer.query_id, details=details)
        )
        return answer

    def _log_cached(self, body: dict) -> None:
        """Log a query event for a cache-served response body."""
        cited = [cid for study in body.get("supporting_studies", []) for cid in study.get("chunk_ids", [])]
        details = json.dumps(
            {
                "query_id": body.get("query_id", ""),
                "question": "",
                "zoom": "",
                "refused": body.get("refused", False),
                "cited": cited,
                "confidence": body.get("confidence_label", "low"),
                "cache": "hit",
            },
            ensure_ascii=False,
        )
        self.store.append_event(
            VersionEvent(
                timestamp=utc_now(),
                actor="query",
                action="query",
                subject_id=body.get("query_id", ""),
                details=details,
            )
        )

    # -- aggregate (calculator) questions -------------------------------------

    def _pooled_effect_answer(self, query_id: str, question: str, zoom: str) -> Optional[Answer]:
        m = _POOLED_RE.search(question.strip().rstrip("?"))
        if not m:
            return None
        subject_name, object_name = m.group(1), m.group(2)
        try:
            subject_id = self.graph.resolve_entity(subject_name)
        except Exception:
            return None
        records = [
            r
            for r in self.store.synthesis.values()
            if r.subject == subject_id and self._object_matches(r.object_key, object_name)
        ]
        if not records:
            return None
        record = sorted(records, key=lambda r: r.group)[0]
        chunk_ids = []
        for claim_id in record.inputs:
            claim = self.store.claims.get(claim_id)
            if claim is None:
                continue
            for cid in claim.source.chunk_ids:
                if cid in self.store.chunks and cid not in chunk_ids:
                    chunk_ids.append(cid)
        if not chunk_ids:
            return None
        markers = " ".join(f"[{cid}]" for cid in chunk_ids)
        text = (
            f"The pooled effect of {self.graph.canonical_name(subject_id)} on "
            f"{self._object_name(record.object_key)} is {record.pooled_estimate:.4g} "
            f"(95% CI {record.ci95[0]:.4g} to {record.ci95[1]:.4g}), pooled across "
            f"{record.n_studies} studies. {markers}"
        )
        citations = []
        for cid in chunk_ids:
            chunk = self.store.chunks[cid]
            citations.append(Citation(chunk.pub_id, chunk.version, cid, 1.0))
        warnings = []
        if record.contradiction_flag:
            warnings.append(CONFLICT_WARNING)
        elif record.agreement_ratio < 1.0:
            warnings.append(DISSENT_WARNING)
        return Answer(
            query_id=query_id,
            question=question,
            zoom=zoom,
            text=text,
            citations=citations,
            confidence=record.confidence,
            confidence_score=CONFIDENCE_SCORES[record.confidence],
            warnings=warnings,
            derivation=self.build_derivation(citations),
            data_points=self._data_points(chunk_ids) if zoom == "data" else None,
            refused=False,
        )

    def _object_matches(self, object_key: str, name: str) -> bool:
        if object_key.startswith("lit:"):
            return normalize_name(object_key[4:]) == normalize_name(name)
        try:
            return self.graph.resolve_entity(name) == object_key
        except Exception:
            return False

    def _object_name(self, object_key: str) -> str:
        if object_key.startswith("lit:"):
            return object_key[4:]
        return self.graph.canonical_name(object_key)

    # -- confidence / synthesis context ---------------------------------------

    def _synthesis_for_chunks(self, chunk_ids: list[str]) -> list[SynthesisRecord]:
        wanted = set(chunk_ids)
        groups = {}
        for claim in self.store.claims.values():
            if wanted & set(claim.source.chunk_ids):
                record = self.store.get_synthesis(claim.group_key())
                if record is not None:
                    groups[record.group] = record
        return [groups[g] for g in sorted(groups)]

    def _confidence(self, question: str, citations: list[Citation], records: list[SynthesisRecord]) -> str:
        q = normalize_name(question)
        for record in records:
            subject = normalize_name(self.graph.canonical_name(record.subject))
            obj = normalize_name(self._object_name(record.object_key))
            names = [subject]
            if record.subject in self.store.entities:
                names += [normalize_name(a) for a in self.graph.entity(record.subject).aliases]
            subj_hit = any(n and n in q for n in names)
            if subj_hit and obj and obj in q:
                return record.confidence
        n_pubs = len({(c.pub_id, c.version) for c in citations})
        if n_pubs >= 3:
            return "high"
        if n_pubs == 2:
            return "medium"
        return "low"

    # -- derivation ------------------------------------------------------------

    def build_derivation(self, citations: list[Citation]) -> str:
        if not citations:
            raise ValueError("derivation requires citations")
        pubs = {}
        for c in citations:
            pubs[(c.pub_id, c.version)] = self.store.publications.get((c.pub_id, c.version))
        dates = sorted(p.date for p in pubs.values() if p is not None)
        years = [d.split("-")[0] for d in dates]
        if years and years[0] != years[-1]:
            dated = f"{years[0]}–{years[-1]}"
        elif dates:
            dated = dates[0]
        else:
            dated = "unknown"
        text = (
            f"This answer is based on {len(citations)} passages from "
            f"{len(pubs)} publications dated {dated}."
        )
        warned = sum(1 for p in pubs.values() if p is not None and p.status == "flagged")
        if warned:
            text += f" {warned} cited publication(s) carry validation warnings."
        return text

    # -- data points -------------------------------------------------------------

    def _data_points(self, chunk_ids: list[str]) -> dict:
        wanted = set(chunk_ids)
        rows = []
        pub_keys = set()
        for claim in sorted(self.store.claims.values(), key=lambda c: c.claim_id):
            if not (wanted & set(claim.source.chunk_ids)) or claim.effect is None:
                continue
            obj = claim.object.key() if isinstance(claim.object, LiteralObject) else self.graph.canonical_name(claim.object)
            rows.append(
                [
                    self.graph.canonical_name(claim.subject),
                    claim.relation,
                    obj,
                    claim.effect.estimate,
                    claim.effect.se,
                    claim.unit or "",
                    claim.source.pub_id,
                ]
            )
            pub_keys.add((claim.source.pub_id, claim.source.version))
        for cid in chunk_ids:
            chunk = self.store.chunks.get(cid)
            if chunk is not None:
                pub_keys.add((chunk.pub_id, chunk.version))
        datasets = []
        for pub_id, version in sorted(pub_keys):
            for ds in sorted(self.store.datasets.values(), key=lambda d: d.dataset_id):
                if ds.pub_id == pub_id and ds.version == version:
                    datasets.append({"dataset_id": ds.dataset_id, "name": ds.name})
        return {
            "effects": {
                "columns": ["subject", "relation", "object", "estimate", "se", "unit", "pub_id"],
                "rows": rows,
            },
            "datasets": datasets,
        }


# -- dataset statistics ----------------------------------------------------------


def dataset_stats(store: Store, dataset_id: str) -> dict:
    ds = store.get_dataset(dataset_id)
    out = {}
    for i, col in enumerate(ds.columns):
        cells = [row[i] for row in ds.rows]
        if col.kind == "numeric":
            values = [float(c) for c in cells]
            if values:
                out[col.name] = {
                    "count": len(values),
                    "mean": sum(values) / len(values),
                    "min": min(values),
                    "max": max(values),
                }
            else:
                out[col.name] = {"count": 0, "mean": None, "min": None, "max": None}
        else:
            out[col.name] = {"count": len(cells)}
    return out


# -- print-ready export ------------------------------------------------------------


def _is_claims_only(text: str) -> bool:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return bool(lines) and all(ln.strip().startswith(CLAIM_PREFIX) for ln in lines)


def export_manuscript(store: Store, graph: KnowledgeGraph, pub_id: str, version: Optional[int] = None) -> str:
    bundle = store.get_publication(pub_id, version)
    pub = bundle.publication
    lines = [f"# {pub.title}", ""]
    if pub.authors:
        lines.append("Authors: " + "; ".join(a.name for a in pub.authors))
    lines.append(f"Date: {pub.date}")
    if pub.venue:
        lines.append(f"Venue: {pub.venue}")
    if pub.keywords:
        lines.append("Keywords: " + ", ".join(pub.keywords))
    lines.append("")
    if pub.status == "superseded":
        superseding = ""
        for event in store.events_for(pub_id):
            if event.action == "supersede" and event.subject_id == f"{pub.pub_id}@v{pub.version}":
                superseding = event.details.replace("superseded_by=", "")
        lines.append(f"**SUPERSEDED by {superseding or 'a later version'}**")
        lines.append("")

    # Consecutive chunks with the same section label re-join under one heading;
    # claims-only sections are regenerated from stored claims below instead.
    current_label = None
    for chunk in bundle.chunks:
        if _is_claims_only(chunk.text):
            continue
        if chunk.section != current_label:
            lines.append(f"## {chunk.section.capitalize()}")
            lines.append("")
            current_label = chunk.section
        lines.append(chunk.text)
        lines.append("")

    if bundle.claims:
        lines.append("## Claims")
        lines.append("")
        for claim in bundle.claims:
            subject = graph.canonical_name(claim.subject)
            obj = claim.object.key()[4:] if isinstance(claim.object, LiteralObject) else graph.canonical_name(claim.object)
            lines.append(render_claim_line(subject, claim.relation, obj, claim.effect, claim.polarity, claim.unit))
        lines.append("")

    groups = sorted({c.group_key() for c in bundle.claims})
    records = [store.get_synthesis(g) for g in groups]
    records = [r for r in records if r is not None]
    if records:
        lines.append("## Synthesis")
        lines.append("")
        for r in records:
            lines.append(
                f"- {graph.canonical_name(r.subject)} {r.relation} "
                f"{r.object_key[4:] if r.object_key.startswith('lit:') else graph.canonical_name(r.object_key)}: "
                f"pooled estimate {r.pooled_estimate:.6g} (95% CI {r.ci95[0]:.6g} to {r.ci95[1]:.6g}), "
                f"{r.n_studies} studies, agreement {r.agreement_ratio:.2f}, confidence {r.confidence}"
            )
        lines.append("")

    lines.append("## Provenance")
    lines.append("")
    lines.append(f"Version {pub.version}, status {pub.status}.")
    if pub.provenance.generator_model:
        lines.append(f"Generated fields by model: {pub.provenance.generator_model}.")
    for note in pub.provenance.revision_notes:
        lines.append(f"- {note.timestamp} {note.actor}: {note.note}")
    lines.append("")
    return "\n".join(lines)
