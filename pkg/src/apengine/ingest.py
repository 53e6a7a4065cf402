"""Submission pipeline: parse, chunk, extract, validate, commit.

Formats: ap-json (direct schema mapping) and markdown (heading
conventions). Validation is flag-not-block: only schema violations
reject; duplicate/reference/statistics/contradiction gates warn and the
publication lands with status=flagged.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date as _date
from typing import Optional

from .errors import ParseError
from .graph import KnowledgeGraph, claims_conflict, normalize_relation
from .models import (
    Author,
    Chunk,
    ClaimSource,
    ClaimTriple,
    DatasetColumn,
    DatasetRecord,
    Effect,
    Finding,
    LiteralObject,
    SECTION_LABELS,
    ValidationReport,
    is_doi,
    make_chunk_id,
    make_claim_id,
)
from .store import Store
from .textutil import split_sentences

CLAIM_PREFIX = "CLAIM:"
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_LINK_RE = re.compile(r"\]\(([^)\s]+)\)")


@dataclass
class DeclaredClaim:
    subject: str
    relation: str
    object: str
    effect: Optional[float] = None
    se: Optional[float] = None
    ci95: Optional[tuple[float, float]] = None
    polarity: str = "supports"
    unit: Optional[str] = None
    raw_line: str = ""


@dataclass
class ParsedSection:
    label: str
    text: str


@dataclass
class ParsedDocument:
    title: str
    authors: list[Author] = field(default_factory=list)
    date: str = ""
    keywords: list[str] = field(default_factory=list)
    venue: Optional[str] = None
    references: list[str] = field(default_factory=list)
    sections: list[ParsedSection] = field(default_factory=list)
    claims_declared: list[str] = field(default_factory=list)  # raw grammar lines
    datasets: list[dict] = field(default_factory=list)
    review_score: Optional[int] = None
    language: str = "en"


@dataclass
class ChunkPolicy:
    max_words: int = 200
    split_level: str = "paragraph"

    def validate(self) -> None:
        if self.max_words < 20:
            raise ValueError("chunk policy max_words must be >= 20")


def parse_claim_line(line: str, line_no: Optional[int] = None) -> DeclaredClaim:
    body = line.strip()
    if not body.startswith(CLAIM_PREFIX):
        raise ParseError(f"not a claim line: {line!r}", line_no)
    parts = [p.strip() for p in body[len(CLAIM_PREFIX):].split("|")]
    if len(parts) < 3 or not all(parts[:3]):
        raise ParseError(f"claim line needs subject | relation | object: {line!r}", line_no)
    claim = DeclaredClaim(subject=parts[0], relation=normalize_relation(parts[1]), object=parts[2], raw_line=body)
    for extra in parts[3:]:
        if not extra:
            continue
        if "=" not in extra:
            raise ParseError(f"bad claim attribute {extra!r}", line_no)
        key, _, value = extra.partition("=")
        key = key.strip().lower()
        value = value.strip()
        try:
            if key == "effect":
                claim.effect = float(value)
            elif key == "se":
                claim.se = float(value)
            elif key == "ci95":
                lo, hi = value.split(",")
                claim.ci95 = (float(lo), float(hi))
            elif key == "polarity":
                if value not in ("supports", "refutes"):
                    raise ValueError(value)
                claim.polarity = value
            elif key == "unit":
                claim.unit = value
            else:
                raise ParseError(f"unknown claim attribute {key!r}", line_no)
        except ParseError:
            raise
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad claim attribute {extra!r}: {exc}", line_no) from exc
    if claim.se is not None and claim.se <= 0:
        raise ParseError(f"claim se must be positive: {line!r}", line_no)
    if (claim.effect is None) != (claim.se is None):
        raise ParseError(f"claim needs both effect and se or neither: {line!r}", line_no)
    return claim


def render_claim_line(subject: str, relation: str, obj: str, effect: Optional[Effect], polarity: str, unit: Optional[str]) -> str:
    parts = [f"{CLAIM_PREFIX} {subject} | {relation} | {obj}"]
    if effect is not None:
        parts.append(f"effect={effect.estimate:g}")
        parts.append(f"se={effect.se:g}")
        if effect.ci95 is not None:
            parts.append(f"ci95={effect.ci95[0]:g},{effect.ci95[1]:g}")
    if polarity != "supports":
        parts.append(f"polarity={polarity}")
    if unit:
        parts.append(f"unit={unit}")
    return " | ".join(parts)


_META_KEYS = ("authors", "date", "venue", "keywords", "language")


def _parse_markdown(text: str) -> ParsedDocument:
    lines = text.splitlines()
    title = None
    doc = ParsedDocument(title="")
    current_heading: Optional[str] = None
    buffer: list[str] = []
    in_preamble = True

    def flush_section() -> None:
        nonlocal buffer, current_heading
        body = "\n".join(buffer).strip()
        buffer = []
        if current_heading is None:
            if body:
                doc.sections.append(ParsedSection("other", body))
            return
        heading = current_heading.strip()
        lowered = heading.lower()
        if lowered == "claims":
            for offset, raw in enumerate(body.splitlines()):
                if raw.strip().startswith(CLAIM_PREFIX):
                    parse_claim_line(raw, line_no=heading_lines[heading_key] + 1 + offset)
                    doc.claims_declared.append(raw.strip())
            if body:
                doc.sections.append(ParsedSection("other", body))
            return
        if lowered == "references":
            for raw in body.splitlines():
                ref = raw.strip().lstrip("-*").strip()
                # list numbers need trailing space so DOI prefixes like "10." survive
                ref = re.sub(r"^\d+\.\s+", "", ref)
                if ref:
                    doc.references.append(ref)
            return
        label = lowered if lowered in SECTION_LABELS else "other"
        if body:
            doc.sections.append(ParsedSection(label, body))

    heading_lines: dict[tuple[str, int], int] = {}
    heading_key: tuple[str, int] = ("", -1)
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("# ") and title is None:
            title = line[2:].strip()
            continue
        if line.startswith("## "):
            flush_section()
            in_preamble = False
            current_heading = line[3:].strip()
            heading_key = (current_heading, line_no)
            heading_lines[heading_key] = line_no
            continue
        if in_preamble and title is not None:
            stripped = line.strip()
            key, _, value = stripped.partition(":")
            if _ and key.strip().lower() in _META_KEYS:
                k = key.strip().lower()
                v = value.strip()
                if k == "authors":
                    doc.authors = [Author(name=n.strip()) for n in v.split(";") if n.strip()]
                elif k == "date":
                    doc.date = v
                elif k == "venue":
                    doc.venue = v or None
                elif k == "keywords":
                    doc.keywords = [w.strip() for w in v.split(",") if w.strip()]
                elif k == "language":
                    doc.language = v or "en"
                continue
        buffer.append(line)
    flush_section()

    if title is None or not title.strip():
        raise ParseError("missing title: no level-1 heading found")
    doc.title = title
    for target in _LINK_RE.findall(text):
        if target not in doc.references:
            doc.references.append(target)
    if not doc.date:
        doc.date = _date.today().isoformat()
    if not doc.sections:
        raise ParseError("empty body: no sections with text")
    return doc


def _parse_ap_json(payload: bytes) -> ParsedDocument:
    try:
        data = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ParseError(f"invalid ap-json payload: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("ap-json payload must be a JSON object")
    title = str(data.get("title", "")).strip()
    if not title:
        raise ParseError("missing title")
    doc = ParsedDocument(title=title)
    doc.authors = [Author(name=a["name"], orcid=a.get("orcid")) for a in data.get("authors", [])]
    doc.date = str(data.get("date", "")) or _date.today().isoformat()
    doc.keywords = [str(k) for k in data.get("keywords", [])]
    doc.venue = data.get("venue")
    doc.references = [str(r) for r in data.get("references", [])]
    doc.review_score = data.get("review_score")
    doc.language = data.get("language", "en")
    for section in data.get("sections", []):
        label = str(section.get("label", "other")).strip().lower()
        if label not in SECTION_LABELS:
            label = "other"
        text = str(section.get("text", "")).strip()
        if text:
            doc.sections.append(ParsedSection(label, text))
    claim_lines = data.get("claims", [])
    for i, raw in enumerate(claim_lines, start=1):
        parse_claim_line(str(raw), line_no=i)
        doc.claims_declared.append(str(raw).strip())
    if doc.claims_declared:
        # Give declared claims a home chunk so provenance always dereferences.
        doc.sections.append(ParsedSection("other", "\n".join(doc.claims_declared)))
    for ds in data.get("datasets", []):
        doc.datasets.append(ds)
    if not doc.sections:
        raise ParseError("empty body: no sections with text")
    return doc


def parse_submission(payload: bytes, format: str) -> ParsedDocument:
    if format == "ap-json":
        return _parse_ap_json(payload)
    if format == "markdown":
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"payload is not UTF-8: {exc}") from exc
        return _parse_markdown(text)
    raise ParseError(f"unknown format {format!r}")


def chunk_document(doc: ParsedDocument, policy: ChunkPolicy, pub_id: str, version: int) -> tuple[list[Chunk], list[Finding]]:
    policy.validate()
    findings: list[Finding] = []
    chunks: list[Chunk] = []
    ordinal = 0

    def emit(section: str, text: str) -> None:
        nonlocal ordinal
        text = text.strip()
        chunk = Chunk(
            chunk_id=make_chunk_id(pub_id, version, ordinal),
            pub_id=pub_id,
            version=version,
            section=section,
            ordinal=ordinal,
            text=text,
            word_count=len(text.split()),
        )
        chunks.append(chunk)
        ordinal += 1

    for section in doc.sections:
        paragraphs = [p for p in re.split(r"\n\s*\n", section.text) if p.strip()]
        for para in paragraphs:
            words = para.split()
            if len(words) <= policy.max_words:
                emit(section.label, para)
                continue
            pieces: list[str] = []
            count = 0
            for sentence in split_sentences(para):
                n = len(sentence.split())
                if n > policy.max_words:
                    if pieces:
                        emit(section.label, " ".join(pieces))
                        pieces, count = [], 0
                    emit(section.label, sentence)
                    findings.append(
                        Finding(
                            gate="schema",
                            severity="warn",
                            message=f"sentence of {n} words exceeds chunk maximum {policy.max_words}",
                            subject_ids=[chunks[-1].chunk_id],
                        )
                    )
                    continue
                if count + n > policy.max_words and pieces:
                    emit(section.label, " ".join(pieces))
                    pieces, count = [], 0
                pieces.append(sentence)
                count += n
            if pieces:
                emit(section.label, " ".join(pieces))
    return chunks, findings


def extract_claims(
    doc: ParsedDocument,
    chunks: list[Chunk],
    graph: KnowledgeGraph,
    composer=None,
    generator_model: str = "",
) -> tuple[list[ClaimTriple], list[Finding]]:
    """Build claim triples from declared grammar lines (and, with a remote
    composer, model-suggested lines parsed by the same grammar)."""
    findings: list[Finding] = []
    raw_lines: list[tuple[str, str]] = [(line, "") for line in doc.claims_declared]

    if composer is not None and getattr(composer, "name", "mock") == "remote":
        from .providers import CompositionRequest

        context = [(c.chunk_id, c.text, 1.0) for c in chunks]
        req = CompositionRequest(
            question="List the factual claims of this document, one per line, as "
            "CLAIM: subject | relation | object",
            context=context,
            zoom="detailed",
        )
        try:
            text = composer.compose_answer(req)
            for line in text.splitlines():
                if line.strip().startswith(CLAIM_PREFIX):
                    raw_lines.append((line.strip(), generator_model or "remote"))
        except Exception as exc:  # extraction is best-effort
            findings.append(Finding("schema", "warn", f"claim extraction backend failed: {exc}"))

    pub_id = chunks[0].pub_id if chunks else ""
    version = chunks[0].version if chunks else 1
    claims: list[ClaimTriple] = []
    seen: set[str] = set()
    for raw, _origin in raw_lines:
        try:
            declared = parse_claim_line(raw)
        except ParseError as exc:
            findings.append(Finding("schema", "warn", f"skipped malformed claim line: {exc}"))
            continue
        subject_id = graph.resolve_entity(declared.subject, create_if_missing=True)
        obj_match = re.fullmatch(rf"({_NUM})\s*(\S.*)?", declared.object)
        obj: object
        if obj_match:
            obj = LiteralObject(float(obj_match.group(1)), (obj_match.group(2) or "").strip())
        else:
            obj = graph.resolve_entity(declared.object, create_if_missing=True)
        home = [c.chunk_id for c in chunks if raw in c.text]
        if not home and chunks:
            home = [chunks[0].chunk_id]
        source = ClaimSource(pub_id=pub_id, version=version, chunk_ids=home)
        effect = None
        if declared.effect is not None and declared.se is not None:
            effect = Effect(declared.effect, declared.se, declared.ci95)
        object_key = obj.key() if isinstance(obj, LiteralObject) else obj
        claim = ClaimTriple(
            claim_id=make_claim_id(subject_id, declared.relation, object_key, source),
            subject=subject_id,
            relation=declared.relation,
            object=obj,
            source=source,
            effect=effect,
            polarity=declared.polarity,
            unit=declared.unit,
        )
        if claim.claim_id in seen:
            continue
        seen.add(claim.claim_id)
        claims.append(claim)
    return claims, findings


def check_duplicates(chunks: list[Chunk], index, embedder, threshold: float = 0.95) -> list[Finding]:
    findings = []
    if len(index) == 0:
        return findings
    for chunk in chunks:
        vec = embedder.embed_texts([chunk.text])[0]
        hits = index.search(vec, k=5)
        for chunk_id, score in hits:
            entry_pub = index._entries[chunk_id].pub_id
            if entry_pub == chunk.pub_id:
                continue
            if score >= threshold:
                findings.append(
                    Finding(
                        gate="duplicate",
                        severity="warn",
                        message=f"near-duplicate of {chunk_id} (score {score:.4f})",
                        subject_ids=[chunk.chunk_id, chunk_id],
                    )
                )
            break
    return findings


def check_references(doc: ParsedDocument, store: Store) -> list[Finding]:
    findings = []
    known = store.known_pub_ids()
    for ref in doc.references:
        if ref in known or is_doi(ref):
            continue
        findings.append(Finding("reference", "warn", f"unresolvable reference: {ref}", [ref]))
    return findings


def check_statistics(claims: list[ClaimTriple]) -> list[Finding]:
    findings = []
    for claim in claims:
        eff = claim.effect
        if eff is None or eff.ci95 is None:
            continue
        lo, hi = eff.expected_ci()
        rlo, rhi = eff.ci95
        if abs(rlo - lo) > 0.005 or abs(rhi - hi) > 0.005:
            findings.append(
                Finding(
                    gate="statistics",
                    severity="warn",
                    message=(
                        f"reported ci95 [{rlo:g}, {rhi:g}] inconsistent with estimate "
                        f"{eff.estimate:g} se {eff.se:g}: expected [{lo:.6g}, {hi:.6g}]"
                    ),
                    subject_ids=[claim.claim_id],
                )
            )
    return findings


def check_contradictions(claims: list[ClaimTriple], graph: KnowledgeGraph) -> list[Finding]:
    findings = []
    for claim in claims:
        existing = graph.group_claims(claim.subject, claim.relation, claim.object_key())
        for other in existing:
            if other.claim_id == claim.claim_id:
                continue
            reason = claims_conflict(claim, other)
            if reason is not None:
                findings.append(
                    Finding(
                        gate="contradiction",
                        severity="warn",
                        message=f"contradicts existing claim {other.claim_id}: {reason}",
                        subject_ids=[claim.claim_id, other.claim_id],
                    )
                )
    return findings


def schema_findings(doc: ParsedDocument) -> list[Finding]:
    findings = []
    if not doc.title.strip():
        findings.append(Finding("schema", "reject", "missing title"))
    if not doc.sections:
        findings.append(Finding("schema", "reject", "no sections with text"))
    try:
        _date.fromisoformat(doc.date)
    except ValueError:
        findings.append(Finding("schema", "reject", f"invalid date {doc.date!r}"))
    return findings


def validate(
    doc: ParsedDocument,
    chunks: list[Chunk],
    claims: list[ClaimTriple],
    store: Store,
    index,
    graph: KnowledgeGraph,
    embedder,
    extra_findings: Optional[list[Finding]] = None,
    duplicate_threshold: float = 0.95,
) -> ValidationReport:
    findings = list(extra_findings or [])
    findings.extend(schema_findings(doc))
    if not any(f.severity == "reject" for f in findings):
        findings.extend(check_duplicates(chunks, index, embedder, duplicate_threshold))
        findings.extend(check_references(doc, store))
        findings.extend(check_statistics(claims))
        findings.extend(check_contradictions(claims, graph))
    return ValidationReport.from_findings(findings)
