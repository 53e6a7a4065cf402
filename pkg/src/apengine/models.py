"""Domain types for the publication engine.

Plain dataclasses with explicit dict (de)serialization so the on-disk
record files carry exactly the documented field names.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, Optional

SECTION_LABELS = ("abstract", "methods", "results", "discussion", "other")
PUB_STATUSES = ("validated", "flagged", "superseded")
EVENT_ACTIONS = ("commit", "supersede", "flag", "feedback", "query")
ZOOM_LEVELS = ("headline", "abstract", "detailed", "data")

# Word budgets per zoom level; headline is additionally capped at one sentence.
ZOOM_WORD_BUDGETS = {"headline": 25, "abstract": 150, "detailed": 400, "data": 400}

CONFIDENCE_SCORES = {"low": 0.25, "medium": 0.60, "high": 0.90}

REFUSAL_TEXT = "The evidence available to this publication is inconclusive for this question."
CONFLICT_WARNING = "Conflicting evidence present"
DISSENT_WARNING = "Not all sources agree: at least one study dissenting"

Z95 = 1.96
CI_TOLERANCE = 0.005


def utc_now() -> str:
    return rfc3339(datetime.now(timezone.utc))


def rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def parse_rfc3339(ts: str) -> datetime:
    return datetime.fromisoformat(ts.replace("Z", "+00:00"))


def short_digest(*parts: str) -> str:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return h[:12]


def make_pub_id(title: str, date_str: str) -> str:
    return "ap:" + short_digest(title, date_str)


def make_chunk_id(pub_id: str, version: int, ordinal: int) -> str:
    return f"{pub_id}#v{version}#c{ordinal}"


def is_doi(ref: str) -> bool:
    return ref.startswith("10.") and "/" in ref


@dataclass
class Author:
    name: str
    orcid: Optional[str] = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name}
        if self.orcid:
            d["orcid"] = self.orcid
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Author":
        return cls(name=d["name"], orcid=d.get("orcid"))


@dataclass
class RevisionNote:
    timestamp: str
    actor: str
    note: str

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "actor": self.actor, "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "RevisionNote":
        return cls(d["timestamp"], d["actor"], d["note"])


@dataclass
class ProvenanceRecord:
    generator_model: str = ""
    created_at: str = field(default_factory=utc_now)
    revision_notes: list[RevisionNote] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "generator_model": self.generator_model,
            "created_at": self.created_at,
            "revision_notes": [n.to_dict() for n in self.revision_notes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProvenanceRecord":
        return cls(
            generator_model=d.get("generator_model", ""),
            created_at=d["created_at"],
            revision_notes=[RevisionNote.from_dict(n) for n in d.get("revision_notes", [])],
        )


@dataclass
class Publication:
    pub_id: str
    version: int
    title: str
    authors: list[Author]
    date: str
    keywords: list[str] = field(default_factory=list)
    venue: Optional[str] = None
    references: list[str] = field(default_factory=list)
    status: str = "validated"
    language: str = "en"
    provenance: ProvenanceRecord = field(default_factory=ProvenanceRecord)

    def validate(self) -> None:
        from .errors import InvariantError

        if not isinstance(self.version, int) or self.version < 1:
            raise InvariantError(f"publication {self.pub_id}: version must be >= 1")
        if not self.title.strip():
            raise InvariantError(f"publication {self.pub_id}: title is empty")
        try:
            date.fromisoformat(self.date)
        except ValueError as exc:
            raise InvariantError(f"publication {self.pub_id}: invalid date {self.date!r}") from exc
        if self.status not in PUB_STATUSES:
            raise InvariantError(f"publication {self.pub_id}: bad status {self.status!r}")

    def to_dict(self) -> dict:
        return {
            "pub_id": self.pub_id,
            "version": self.version,
            "title": self.title,
            "authors": [a.to_dict() for a in self.authors],
            "date": self.date,
            "keywords": list(self.keywords),
            "venue": self.venue,
            "references": list(self.references),
            "status": self.status,
            "language": self.language,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Publication":
        return cls(
            pub_id=d["pub_id"],
            version=d["version"],
            title=d["title"],
            authors=[Author.from_dict(a) for a in d.get("authors", [])],
            date=d["date"],
            keywords=list(d.get("keywords", [])),
            venue=d.get("venue"),
            references=list(d.get("references", [])),
            status=d.get("status", "validated"),
            language=d.get("language", "en"),
            provenance=ProvenanceRecord.from_dict(d["provenance"]),
        )


@dataclass
class Chunk:
    chunk_id: str
    pub_id: str
    version: int
    section: str
    ordinal: int
    text: str
    word_count: int

    def validate(self) -> None:
        from .errors import InvariantError

        if self.section not in SECTION_LABELS:
            raise InvariantError(f"chunk {self.chunk_id}: bad section {self.section!r}")
        if not self.text.strip():
            raise InvariantError(f"chunk {self.chunk_id}: empty text")
        if self.word_count != len(self.text.split()):
            raise InvariantError(f"chunk {self.chunk_id}: word_count mismatch")

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "pub_id": self.pub_id,
            "version": self.version,
            "section": self.section,
            "ordinal": self.ordinal,
            "text": self.text,
            "word_count": self.word_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            chunk_id=d["chunk_id"],
            pub_id=d["pub_id"],
            version=d["version"],
            section=d["section"],
            ordinal=d["ordinal"],
            text=d["text"],
            word_count=d["word_count"],
        )


@dataclass
class DatasetColumn:
    name: str
    kind: str  # numeric | text

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetColumn":
        return cls(d["name"], d["kind"])


@dataclass
class DatasetRecord:
    dataset_id: str
    pub_id: str
    version: int
    name: str
    columns: list[DatasetColumn]
    rows: list[list]

    def validate(self) -> None:
        from .errors import InvariantError

        ncols = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != ncols:
                raise InvariantError(f"dataset {self.dataset_id}: row {i} has {len(row)} cells, expected {ncols}")
            for col, cell in zip(self.columns, row):
                if col.kind == "numeric":
                    try:
                        value = float(cell)
                    except (TypeError, ValueError) as exc:
                        raise InvariantError(
                            f"dataset {self.dataset_id}: row {i} column {col.name!r} not numeric: {cell!r}"
                        ) from exc
                    if value != value or value in (float("inf"), float("-inf")):
                        raise InvariantError(f"dataset {self.dataset_id}: row {i} column {col.name!r} not finite")

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "pub_id": self.pub_id,
            "version": self.version,
            "name": self.name,
            "columns": [c.to_dict() for c in self.columns],
            "rows": [list(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        return cls(
            dataset_id=d["dataset_id"],
            pub_id=d["pub_id"],
            version=d["version"],
            name=d["name"],
            columns=[DatasetColumn.from_dict(c) for c in d.get("columns", [])],
            rows=[list(r) for r in d.get("rows", [])],
        )


@dataclass
class VersionEvent:
    timestamp: str
    actor: str
    action: str
    subject_id: str
    details: str = ""

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "actor": self.actor,
            "action": self.action,
            "subject_id": self.subject_id,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VersionEvent":
        return cls(d["timestamp"], d["actor"], d["action"], d["subject_id"], d.get("details", ""))


@dataclass
class FeedbackEvent:
    query_id: str
    rating: str  # up | down
    flag_reason: Optional[str] = None
    timestamp: str = field(default_factory=utc_now)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "rating": self.rating,
            "flag_reason": self.flag_reason,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEvent":
        return cls(d["query_id"], d["rating"], d.get("flag_reason"), d["timestamp"])


@dataclass
class Entity:
    entity_id: str
    canonical_name: str
    aliases: list[str] = field(default_factory=list)
    external_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "canonical_name": self.canonical_name,
            "aliases": sorted(self.aliases),
            "external_ids": sorted(self.external_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Entity":
        return cls(
            entity_id=d["entity_id"],
            canonical_name=d["canonical_name"],
            aliases=list(d.get("aliases", [])),
            external_ids=list(d.get("external_ids", [])),
        )


@dataclass
class LiteralObject:
    value: float
    unit: str

    def key(self) -> str:
        return f"lit:{self.value:g} {self.unit}".strip()

    def to_dict(self) -> dict:
        return {"value": self.value, "unit": self.unit}

    @classmethod
    def from_dict(cls, d: dict) -> "LiteralObject":
        return cls(float(d["value"]), d.get("unit", ""))


@dataclass
class Effect:
    estimate: float
    se: float
    ci95: Optional[tuple[float, float]] = None

    def expected_ci(self) -> tuple[float, float]:
        return (self.estimate - Z95 * self.se, self.estimate + Z95 * self.se)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"estimate": self.estimate, "se": self.se}
        if self.ci95 is not None:
            d["ci95"] = [self.ci95[0], self.ci95[1]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Effect":
        ci = d.get("ci95")
        return cls(float(d["estimate"]), float(d["se"]), (ci[0], ci[1]) if ci else None)


@dataclass
class ClaimSource:
    pub_id: str
    version: int
    chunk_ids: list[str]

    def to_dict(self) -> dict:
        return {"pub_id": self.pub_id, "version": self.version, "chunk_ids": list(self.chunk_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "ClaimSource":
        return cls(d["pub_id"], d["version"], list(d.get("chunk_ids", [])))


@dataclass
class ClaimTriple:
    claim_id: str
    subject: str  # entity_id
    relation: str
    object: Any  # entity_id str or LiteralObject
    source: ClaimSource
    effect: Optional[Effect] = None
    polarity: str = "supports"
    unit: Optional[str] = None
    asserted_at: str = field(default_factory=utc_now)

    def object_key(self) -> str:
        if isinstance(self.object, LiteralObject):
            return self.object.key()
        return self.object

    def group_key(self) -> str:
        return group_key(self.subject, self.relation, self.object_key())

    def to_dict(self) -> dict:
        obj: Any
        if isinstance(self.object, LiteralObject):
            obj = self.object.to_dict()
        else:
            obj = self.object
        d: dict[str, Any] = {
            "claim_id": self.claim_id,
            "subject": self.subject,
            "relation": self.relation,
            "object": obj,
            "source": self.source.to_dict(),
            "polarity": self.polarity,
            "asserted_at": self.asserted_at,
        }
        if self.effect is not None:
            d["effect"] = self.effect.to_dict()
        if self.unit is not None:
            d["unit"] = self.unit
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClaimTriple":
        obj = d["object"]
        if isinstance(obj, dict):
            obj = LiteralObject.from_dict(obj)
        return cls(
            claim_id=d["claim_id"],
            subject=d["subject"],
            relation=d["relation"],
            object=obj,
            source=ClaimSource.from_dict(d["source"]),
            effect=Effect.from_dict(d["effect"]) if d.get("effect") else None,
            polarity=d.get("polarity", "supports"),
            unit=d.get("unit"),
            asserted_at=d["asserted_at"],
        )


def group_key(subject: str, relation: str, object_key: str) -> str:
    return f"{subject}|{relation}|{object_key}"


def make_claim_id(subject: str, relation: str, object_key: str, source: ClaimSource) -> str:
    return "clm:" + short_digest(
        subject, relation, object_key, source.pub_id, str(source.version), ",".join(source.chunk_ids)
    )


@dataclass
class SynthesisRecord:
    group: str
    subject: str
    relation: str
    object_key: str
    n_studies: int
    pooled_estimate: float
    pooled_se: float
    ci95: tuple[float, float]
    agreement_ratio: float
    confidence: str
    contradiction_flag: bool
    computed_at: str
    inputs: list[str]

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "subject": self.subject,
            "relation": self.relation,
            "object_key": self.object_key,
            "n_studies": self.n_studies,
            "pooled_estimate": self.pooled_estimate,
            "pooled_se": self.pooled_se,
            "ci95": [self.ci95[0], self.ci95[1]],
            "agreement_ratio": self.agreement_ratio,
            "confidence": self.confidence,
            "contradiction_flag": self.contradiction_flag,
            "computed_at": self.computed_at,
            "inputs": list(self.inputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisRecord":
        return cls(
            group=d["group"],
            subject=d["subject"],
            relation=d["relation"],
            object_key=d["object_key"],
            n_studies=d["n_studies"],
            pooled_estimate=d["pooled_estimate"],
            pooled_se=d["pooled_se"],
            ci95=(d["ci95"][0], d["ci95"][1]),
            agreement_ratio=d["agreement_ratio"],
            confidence=d["confidence"],
            contradiction_flag=d["contradiction_flag"],
            computed_at=d["computed_at"],
            inputs=list(d.get("inputs", [])),
        )


@dataclass
class Finding:
    gate: str  # duplicate | reference | statistics | contradiction | schema
    severity: str  # info | warn | reject
    message: str
    subject_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "gate": self.gate,
            "severity": self.severity,
            "message": self.message,
            "subject_ids": list(self.subject_ids),
        }


@dataclass
class ValidationReport:
    findings: list[Finding]
    verdict: str  # accepted | accepted_flagged | rejected

    @classmethod
    def from_findings(cls, findings: list[Finding]) -> "ValidationReport":
        if any(f.severity == "reject" for f in findings):
            verdict = "rejected"
        elif any(f.severity == "warn" for f in findings):
            verdict = "accepted_flagged"
        else:
            verdict = "accepted"
        return cls(findings=findings, verdict=verdict)

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings], "verdict": self.verdict}


@dataclass
class Citation:
    pub_id: str
    version: int
    chunk_id: str
    score: float

    def to_dict(self) -> dict:
        return {
            "pub_id": self.pub_id,
            "version": self.version,
            "chunk_id": self.chunk_id,
            "score": self.score,
        }


@dataclass
class Answer:
    query_id: str
    question: str
    zoom: str
    text: str
    citations: list[Citation]
    confidence: str
    confidence_score: float
    warnings: list[str]
    derivation: str
    data_points: Optional[dict] = None
    refused: bool = False
