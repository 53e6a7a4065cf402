"""Top-level orchestration: wires store, index, graph, synthesis, providers
and the query path together, and owns the mutation epoch the response
cache keys off."""

from __future__ import annotations

import json
import threading
from collections import Counter
from pathlib import Path
from typing import Optional

from . import ingest as ingest_mod
from .config import Config
from .errors import ParseError, RejectedSubmissionError
from .graph import FactPattern, KnowledgeGraph
from .models import (
    Finding,
    ProvenanceRecord,
    Publication,
    RevisionNote,
    ValidationReport,
    make_pub_id,
    utc_now,
)
from .providers import MockProvider, RemoteConfig, RemoteProvider
from .query import QueryEngine, dataset_stats, export_manuscript
from .store import Store, open_store
from .synth import Synthesizer
from .index import VectorIndex


class Engine:
    def __init__(self, config: Config):
        self.config = config
        self.store: Store = open_store(config.store_path)
        self.index = VectorIndex(dimension=config.index_dimension)
        self.provider = self._build_provider(config)
        self.graph = KnowledgeGraph(self.store)
        self.synthesizer = Synthesizer(self.store, self.graph)
        self.query = QueryEngine(
            self.store,
            self.index,
            self.graph,
            self.synthesizer,
            self.provider,
            tau_refuse=config.tau_refuse,
            gamma=config.gamma,
        )
        self.mutation_epoch = 0
        self._ingest_lock = threading.Lock()
        self._rebuild_index()

    @staticmethod
    def _build_provider(config: Config):
        if config.providers_mode == "remote":
            return RemoteProvider(
                RemoteConfig(
                    base_url=config.providers_base_url,
                    model_name=config.providers_model,
                    api_key=config.providers_api_key,
                ),
                dimension=config.index_dimension,
            )
        return MockProvider(dimension=config.index_dimension)

    def _rebuild_index(self) -> None:
        for chunk in self.store.all_chunks():
            vec = self.provider.embed_texts([chunk.text])[0]
            self.index.upsert(
                chunk.chunk_id,
                vec,
                chunk.pub_id,
                chunk.version,
                superseded=self.store.is_superseded(chunk.pub_id, chunk.version),
            )

    # -- ingestion -------------------------------------------------------------

    def ingest(
        self,
        payload: bytes,
        format: str = "ap-json",
        actor: str = "system",
        pub_id: Optional[str] = None,
    ) -> tuple[ValidationReport, Optional[tuple[str, int]]]:
        """Full pipeline; returns (report, committed key or None when rejected)."""
        with self._ingest_lock:
            try:
                doc = ingest_mod.parse_submission(payload, format)
            except ParseError as exc:
                report = ValidationReport.from_findings([Finding("schema", "reject", str(exc))])
                return report, None

            pid = pub_id or (doc.title and make_pub_id(doc.title, doc.date)) or make_pub_id("untitled", doc.date)
            latest = self.store.latest_version(pid, include_superseded=True)
            version = (latest or 0) + 1

            chunks, chunk_findings = ingest_mod.chunk_document(
                doc, ingest_mod.ChunkPolicy(max_words=self.config.chunk_max_words), pid, version
            )
            claims, claim_findings = ingest_mod.extract_claims(
                doc, chunks, self.graph, composer=self.provider, generator_model=getattr(self.provider, "name", "")
            )
            report = ingest_mod.validate(
                doc,
                chunks,
                claims,
                self.store,
                self.index,
                self.graph,
                self.provider,
                extra_findings=chunk_findings + claim_findings,
                duplicate_threshold=self.config.duplicate_threshold,
            )
            if report.verdict == "rejected":
                return report, None

            provenance = ProvenanceRecord(created_at=utc_now())
            if doc.review_score is not None:
                provenance.revision_notes.append(
                    RevisionNote(timestamp=utc_now(), actor=actor, note=f"review_score={doc.review_score}")
                )
            pub = Publication(
                pub_id=pid,
                version=version,
                title=doc.title,
                authors=doc.authors,
                date=doc.date,
                keywords=doc.keywords,
                venue=doc.venue,
                references=doc.references,
                status="flagged" if report.verdict == "accepted_flagged" else "validated",
                language=doc.language,
                provenance=provenance,
            )
            datasets = []
            for i, ds in enumerate(doc.datasets):
                from .models import DatasetColumn, DatasetRecord

                datasets.append(
                    DatasetRecord(
                        dataset_id=ds.get("dataset_id") or f"{pid}#v{version}#d{i}",
                        pub_id=pid,
                        version=version,
                        name=ds.get("name", f"dataset-{i}"),
                        columns=[DatasetColumn(c["name"], c.get("kind", "text")) for c in ds.get("columns", [])],
                        rows=[list(r) for r in ds.get("rows", [])],
                    )
                )

            self.store.put_publication(pub, chunks, claims, datasets, actor=actor)
            for chunk in chunks:
                vec = self.provider.embed_texts([chunk.text])[0]
                self.index.upsert(chunk.chunk_id, vec, pid, version)
            self.synthesizer.refresh_groups_of(pid, version)
            self.mutation_epoch += 1
            return report, (pid, version)

    # -- supersede ---------------------------------------------------------------

    def supersede(self, old: tuple[str, int], new: tuple[str, int], actor: str = "system") -> None:
        self.store.mark_superseded(old, new, actor)
        self.index.set_superseded(old[0], old[1], True)
        self.synthesizer.refresh_groups_of(old[0], old[1])
        self.mutation_epoch += 1

    # -- read paths ---------------------------------------------------------------

    def answer(self, question: str, zoom: str = "abstract"):
        return self.query.answer(question, zoom)

    def facts(self, subject=None, relation=None, object=None, include_superseded: bool = False):
        return self.graph.query_facts(
            FactPattern(subject=subject, relation=relation, object=object),
            include_superseded=include_superseded,
        )

    def export_manuscript(self, pub_id: str, version: Optional[int] = None) -> str:
        return export_manuscript(self.store, self.graph, pub_id, version)

    def dataset_stats(self, dataset_id: str) -> dict:
        return dataset_stats(self.store, dataset_id)

    # -- author digest -------------------------------------------------------------

    def feedback_digest(self, since: Optional[str] = None) -> str:
        events = self.store.events_since(since)
        queries = []
        for e in events:
            if e.action != "query":
                continue
            try:
                queries.append(json.loads(e.details))
            except ValueError:
                continue
        query_count = len(queries)
        refused = sum(1 for q in queries if q.get("refused"))
        refusal_rate = (refused / query_count) if query_count else 0.0

        theme_counter: Counter[str] = Counter()
        theme_questions: dict[str, list[str]] = {}
        for q in queries:
            cited = q.get("cited") or []
            if cited:
                pub_counts = Counter(cid.split("#v")[0] for cid in cited)
                top_pub = pub_counts.most_common(1)[0][0]
            else:
                top_pub = "(no citations)"
            theme_counter[top_pub] += 1
            theme_questions.setdefault(top_pub, []).append(q.get("question", ""))

        known_ids = {q.get("query_id") for q in queries}
        feedback = [
            f for f in self.store.feedback if since is None or f.timestamp >= since
        ]
        downs = [f for f in feedback if f.rating == "down"]
        flags = [f for f in downs if f.flag_reason]

        lines = ["# Reader digest", ""]
        lines.append(f"- Queries: {query_count}")
        lines.append(f"- Refusals: {refused} (rate {refusal_rate:.2f})")
        lines.append(f"- Down-votes: {len(downs)}")
        lines.append("")
        lines.append("## Top question themes")
        if theme_counter:
            for pub, count in theme_counter.most_common(10):
                sample = theme_questions[pub][0]
                lines.append(f"- {pub}: {count} question(s), e.g. {sample!r}")
        else:
            lines.append("- none")
        lines.append("")
        lines.append("## Flagged queries")
        if flags:
            for f in flags:
                marker = "" if f.query_id in known_ids else " (outside window)"
                lines.append(f"- {f.query_id}{marker}: {f.flag_reason}")
        else:
            lines.append("- none")
        lines.append("")
        return "\n".join(lines)
