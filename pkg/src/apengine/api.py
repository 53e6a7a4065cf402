"""HTTP service: query, facts, data, submit, feedback, publications.

UTF-8 JSON throughout; errors are ``{"error": {"code", "message"}}`` with
the HTTP status authoritative. Responses carry an ``X-Cache`` header on
the query endpoint; the whole cache flushes on any commit or supersede.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from .engine import Engine
from .errors import NotFoundError, ProviderError
from .graph import FactPattern
from .models import (
    Answer,
    FeedbackEvent,
    LiteralObject,
    ZOOM_LEVELS,
    is_doi,
    utc_now,
)


def _error(status: int, code: str, message: str, headers: Optional[dict] = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message}},
        headers=headers or {},
    )


class ResponseCache:
    def __init__(self, ttl_s: int):
        self.ttl_s = ttl_s
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], tuple[float, int, dict]] = {}

    def get(self, key: tuple[str, str], epoch: int) -> Optional[dict]:
        with self._lock:
            hit = self._entries.get(key)
            if hit is None:
                return None
            inserted_at, entry_epoch, body = hit
            if entry_epoch != epoch or time.monotonic() - inserted_at > self.ttl_s:
                del self._entries[key]
                return None
            return body

    def put(self, key: tuple[str, str], epoch: int, body: dict) -> None:
        with self._lock:
            self._entries[key] = (time.monotonic(), epoch, body)


class TokenBucket:
    def __init__(self, rate: float):
        self.rate = rate
        self.capacity = max(10.0, rate)
        self._lock = threading.Lock()
        self._state: dict[str, tuple[float, float]] = {}

    def allow(self, key: str) -> bool:
        if self.rate <= 0:
            return True
        now = time.monotonic()
        with self._lock:
            tokens, last = self._state.get(key, (self.capacity, now))
            tokens = min(self.capacity, tokens + (now - last) * self.rate)
            if tokens < 1.0:
                self._state[key] = (tokens, now)
                return False
            self._state[key] = (tokens - 1.0, now)
            return True


def _supporting_studies(answer: Answer) -> list[dict]:
    grouped: dict[tuple[str, int], list[str]] = {}
    for c in answer.citations:
        grouped.setdefault((c.pub_id, c.version), []).append(c.chunk_id)
    out = []
    for (pub_id, version), chunk_ids in sorted(grouped.items()):
        entry: dict = {"publication_id": pub_id, "version": version, "chunk_ids": chunk_ids}
        if is_doi(pub_id):
            entry["doi"] = pub_id
        out.append(entry)
    return out


def query_response_body(answer: Answer, summary_text: str) -> dict:
    body: dict = {
        "query_id": answer.query_id,
        "answer_summary": summary_text,
        "answer_detail": answer.text,
        "supporting_studies": _supporting_studies(answer),
        "confidence_score": answer.confidence_score,
        "confidence_label": answer.confidence,
        "warnings": list(answer.warnings),
        "derivation": answer.derivation,
        "refused": answer.refused,
    }
    if answer.data_points is not None:
        body["data_points"] = answer.data_points
    return body


def serialize_fact(entry: dict, graph) -> dict:
    claim = entry["claim"]
    obj = claim.object
    source: dict = {
        "pub_id": claim.source.pub_id,
        "version": claim.source.version,
        "chunk_ids": list(claim.source.chunk_ids),
    }
    if is_doi(claim.source.pub_id):
        source["doi"] = claim.source.pub_id
    fact: dict = {
        "claim_id": claim.claim_id,
        "subject": graph.canonical_name(claim.subject),
        "subject_id": claim.subject,
        "relation": claim.relation,
        "object": obj.to_dict() if isinstance(obj, LiteralObject) else graph.canonical_name(obj),
        "polarity": claim.polarity,
        "source": source,
        "asserted_at": claim.asserted_at,
        "group": claim.group_key(),
    }
    if not isinstance(obj, LiteralObject):
        fact["object_id"] = obj
    if claim.effect is not None:
        fact["effect"] = claim.effect.to_dict()
    if claim.unit is not None:
        fact["unit"] = claim.unit
    return fact


def serialize_synthesis(record) -> dict:
    return record.to_dict()


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="apengine", docs_url=None, redoc_url=None)
    config = engine.config
    cache = ResponseCache(config.cache_ttl_s)
    bucket = TokenBucket(config.rate_limit_rps)
    keys = config.api_keys() if config.auth_enabled else {}

    def auth_role(request: Request) -> Optional[str]:
        key = request.headers.get("X-API-Key") or ""
        return keys.get(key)

    def check_rate(request: Request) -> Optional[JSONResponse]:
        key = request.headers.get("X-API-Key") or (request.client.host if request.client else "anonymous")
        if not bucket.allow(key):
            return _error(429, "rate_limited", "rate limit exceeded")
        return None

    @app.post("/v1/query")
    async def post_query(request: Request):
        limited = check_rate(request)
        if limited:
            return limited
        if config.auth_enabled and not config.auth_query_open and auth_role(request) is None:
            return _error(401, "unauthorized", "valid API key required")
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "bad_request", "body must be a JSON object")
        if not isinstance(payload, dict):
            return _error(400, "bad_request", "body must be a JSON object")
        question = str(payload.get("question") or "").strip()
        if not question:
            return _error(400, "bad_request", "question is empty")
        zoom = payload.get("zoom", "abstract")
        if zoom not in ZOOM_LEVELS:
            return _error(400, "bad_request", f"unknown zoom {zoom!r}")

        cache_key = (" ".join(question.lower().split()), zoom)
        cached = cache.get(cache_key, engine.mutation_epoch)
        if cached is not None:
            # Cache hits still log a query event for monitoring.
            engine.query._log_cached(cached)
            return JSONResponse(content=cached, headers={"X-Cache": "hit"})

        try:
            answer = engine.answer(question, zoom)
            if answer.refused:
                summary = answer.text
            else:
                summary = engine.query.answer(question, "headline", log=False).text
        except ProviderError as exc:
            return _error(503, "provider_unavailable", str(exc))
        body = query_response_body(answer, summary)
        cache.put(cache_key, engine.mutation_epoch, body)
        return JSONResponse(content=body, headers={"X-Cache": "miss"})

    @app.get("/v1/facts")
    async def get_facts(
        request: Request,
        subject: Optional[str] = None,
        relation: Optional[str] = None,
        object: Optional[str] = None,
        include_superseded: bool = False,
    ):
        limited = check_rate(request)
        if limited:
            return limited
        if subject is None and relation is None and object is None:
            return _error(400, "bad_request", "at least one of subject/relation/object is required")
        result = engine.graph.query_facts(
            FactPattern(subject=subject, relation=relation, object=object),
            include_superseded=include_superseded,
        )
        facts = [serialize_fact(entry, engine.graph) for entry in result.results]
        synthesis = []
        seen = set()
        for entry in result.results:
            record = entry["synthesis"]
            if record is not None and record.group not in seen:
                seen.add(record.group)
                synthesis.append(serialize_synthesis(record))
        return JSONResponse(content={"facts": facts, "synthesis": synthesis, "warnings": result.warnings})

    @app.get("/v1/data/{dataset_id:path}")
    async def get_data(request: Request, dataset_id: str, format: str = "json"):
        limited = check_rate(request)
        if limited:
            return limited
        if format not in ("json", "csv"):
            return _error(400, "bad_request", f"unknown format {format!r}")
        try:
            ds = engine.store.get_dataset(dataset_id)
        except NotFoundError as exc:
            return _error(404, "not_found", str(exc))
        superseded = engine.store.is_superseded(ds.pub_id, ds.version)
        if format == "json":
            return JSONResponse(
                content={
                    "name": ds.name,
                    "columns": [c.to_dict() for c in ds.columns],
                    "rows": [list(r) for r in ds.rows],
                    "superseded": superseded,
                }
            )
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow([c.name for c in ds.columns])
        for row in ds.rows:
            writer.writerow(row)
        text = buf.getvalue()
        if superseded:
            text = "# superseded\r\n" + text
        return PlainTextResponse(content=text, media_type="text/csv; charset=utf-8")

    @app.post("/v1/submit")
    async def post_submit(request: Request):
        limited = check_rate(request)
        if limited:
            return limited
        if config.auth_enabled:
            role = auth_role(request)
            if role not in ("contributor", "admin"):
                return _error(401, "unauthorized", "contributor API key required")
        raw = await request.body()
        try:
            json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, ValueError):
            return _error(400, "bad_request", "body must be an ap-json object")
        actor = request.headers.get("X-API-Key", "anonymous") or "anonymous"
        report, committed = engine.ingest(raw, format="ap-json", actor=actor)
        if committed is None:
            return JSONResponse(status_code=422, content={"report": report.to_dict()})
        pub_id, version = committed
        return JSONResponse(
            status_code=201,
            content={"pub_id": pub_id, "version": version, "report": report.to_dict()},
        )

    @app.post("/v1/feedback")
    async def post_feedback(request: Request):
        limited = check_rate(request)
        if limited:
            return limited
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "bad_request", "body must be a JSON object")
        rating = payload.get("rating")
        if rating not in ("up", "down"):
            return _error(400, "bad_request", f"bad rating {rating!r}")
        query_id = str(payload.get("query_id") or "")
        known = any(
            e.action == "query" and e.subject_id == query_id for e in engine.store.events
        )
        if not known:
            return _error(404, "not_found", f"unknown query_id {query_id!r}")
        engine.store.append_event(
            FeedbackEvent(
                query_id=query_id,
                rating=rating,
                flag_reason=payload.get("flag_reason"),
                timestamp=utc_now(),
            )
        )
        return Response(status_code=204)

    @app.get("/v1/publications/{pub_id:path}")
    async def get_publication(request: Request, pub_id: str, version: Optional[int] = None):
        limited = check_rate(request)
        if limited:
            return limited
        try:
            bundle = engine.store.get_publication(pub_id, version)
        except NotFoundError as exc:
            return _error(404, "not_found", str(exc))
        pub = bundle.publication
        superseded_by = None
        for event in engine.store.events_for(pub_id):
            if event.action == "supersede" and event.subject_id == f"{pub.pub_id}@v{pub.version}":
                superseded_by = event.details.split("original_timestamp=")[0].replace("superseded_by=", "").strip("; ")
        body = {
            "pub_id": pub.pub_id,
            "version": pub.version,
            "title": pub.title,
            "authors": [a.to_dict() for a in pub.authors],
            "date": pub.date,
            "keywords": pub.keywords,
            "venue": pub.venue,
            "references": pub.references,
            "status": pub.status,
            "language": pub.language,
            "provenance": pub.provenance.to_dict(),
            "superseded_by": superseded_by,
            "chunks": [
                {"chunk_id": c.chunk_id, "section": c.section, "ordinal": c.ordinal, "text": c.text}
                for c in bundle.chunks
            ],
            "events": [e.to_dict() for e in engine.store.events_for(pub_id)],
        }
        return JSONResponse(content=body)

    return app
