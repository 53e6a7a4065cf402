"""Versioned, append-only persistence.

One line-delimited UTF-8 JSON file per record kind under a root directory.
Every line is a self-describing object with ``kind`` and ``schema_version``.
Nothing is deleted: status changes and synthesis updates append fresh
records, and the latest record for a key wins at load time. This keeps the
full revision history inspectable with nothing fancier than `grep`.

Concurrency: single writer, many readers. All mutations serialize through
one lock; reads go against in-memory maps that are only replaced under
that lock.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    CorruptRecordError,
    DuplicateVersionError,
    InvariantError,
    NotFoundError,
    StoreError,
)
from .models import (
    ClaimTriple,
    Chunk,
    DatasetRecord,
    Entity,
    FeedbackEvent,
    Publication,
    SynthesisRecord,
    VersionEvent,
    parse_rfc3339,
    utc_now,
)

SCHEMA_VERSION = 1

_FILES = {
    "publication": "publications.jsonl",
    "chunk": "chunks.jsonl",
    "claim": "claims.jsonl",
    "entity": "entities.jsonl",
    "dataset": "datasets.jsonl",
    "event": "events.jsonl",
    "feedback": "feedback.jsonl",
    "synthesis": "synthesis.jsonl",
}


class PublicationBundle:
    """A publication together with its chunks, claims and datasets."""

    def __init__(self, publication, chunks, claims, datasets):
        self.publication = publication
        self.chunks = chunks
        self.claims = claims
        self.datasets = datasets


class Store:
    def __init__(self, root: Path):
        self.root = root
        self._lock = threading.RLock()
        self.publications: dict[tuple[str, int], Publication] = {}
        self.chunks: dict[str, Chunk] = {}
        self.chunks_by_pub: dict[tuple[str, int], list[str]] = {}
        self.claims: dict[str, ClaimTriple] = {}
        self.entities: dict[str, Entity] = {}
        self.datasets: dict[str, DatasetRecord] = {}
        self.events: list[VersionEvent] = []
        self.feedback: list[FeedbackEvent] = []
        self.synthesis: dict[str, SynthesisRecord] = {}

    # -- loading -----------------------------------------------------------

    def _load(self, recover: bool = False) -> None:
        for kind, fname in _FILES.items():
            path = self.root / fname
            if not path.exists():
                continue
            with path.open("r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        if not isinstance(record, dict) or "kind" not in record:
                            raise ValueError("record missing kind field")
                        self._apply(record)
                    except (ValueError, KeyError, TypeError) as exc:
                        if recover:
                            continue
                        raise CorruptRecordError(str(path), line_no, str(exc)) from exc

    def _apply(self, record: dict) -> None:
        kind = record["kind"]
        if kind == "publication":
            pub = Publication.from_dict(record)
            self.publications[(pub.pub_id, pub.version)] = pub
        elif kind == "chunk":
            chunk = Chunk.from_dict(record)
            is_new = chunk.chunk_id not in self.chunks
            self.chunks[chunk.chunk_id] = chunk
            if is_new:
                self.chunks_by_pub.setdefault((chunk.pub_id, chunk.version), []).append(chunk.chunk_id)
        elif kind == "claim":
            claim = ClaimTriple.from_dict(record)
            self.claims[claim.claim_id] = claim
        elif kind == "entity":
            ent = Entity.from_dict(record)
            self.entities[ent.entity_id] = ent
        elif kind == "dataset":
            ds = DatasetRecord.from_dict(record)
            self.datasets[ds.dataset_id] = ds
        elif kind == "event":
            self.events.append(VersionEvent.from_dict(record))
        elif kind == "feedback":
            self.feedback.append(FeedbackEvent.from_dict(record))
        elif kind == "synthesis":
            if record.get("deleted"):
                self.synthesis.pop(record["group"], None)
            else:
                rec = SynthesisRecord.from_dict(record)
                self.synthesis[rec.group] = rec
        else:
            raise ValueError(f"unknown record kind {kind!r}")

    # -- writing -----------------------------------------------------------

    def _append(self, kind: str, payload: dict) -> None:
        payload = dict(payload)
        payload["kind"] = kind
        payload["schema_version"] = SCHEMA_VERSION
        path = self.root / _FILES[kind]
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- publications ------------------------------------------------------

    def put_publication(
        self,
        pub: Publication,
        chunks: list[Chunk],
        claims: list[ClaimTriple],
        datasets: list[DatasetRecord],
        actor: str = "system",
    ) -> tuple[str, int]:
        with self._lock:
            pub.validate()
            key = (pub.pub_id, pub.version)
            if key in self.publications:
                raise DuplicateVersionError(f"publication {pub.pub_id} version {pub.version} already exists")
            ordinals = sorted(c.ordinal for c in chunks)
            if ordinals != list(range(len(chunks))):
                raise InvariantError(f"publication {pub.pub_id}: non-contiguous ordinals {ordinals}")
            chunk_ids = set()
            for chunk in chunks:
                if (chunk.pub_id, chunk.version) != key:
                    raise InvariantError(f"chunk {chunk.chunk_id} does not reference {key}")
                chunk.validate()
                chunk_ids.add(chunk.chunk_id)
            for claim in claims:
                if (claim.source.pub_id, claim.source.version) != key:
                    raise InvariantError(f"claim {claim.claim_id} does not reference {key}")
                missing = [c for c in claim.source.chunk_ids if c not in chunk_ids]
                if missing:
                    raise InvariantError(f"claim {claim.claim_id}: unknown source chunks {missing}")
            for ds in datasets:
                if (ds.pub_id, ds.version) != key:
                    raise InvariantError(f"dataset {ds.dataset_id} does not reference {key}")
                ds.validate()

            # Publication record written last: it is the commit point, so a
            # torn write leaves only orphan records invisible to readers.
            for chunk in chunks:
                self._append("chunk", chunk.to_dict())
            for claim in claims:
                self._append("claim", claim.to_dict())
            for ds in datasets:
                self._append("dataset", ds.to_dict())
            self._append("publication", pub.to_dict())
            for chunk in chunks:
                self.chunks[chunk.chunk_id] = chunk
            self.chunks_by_pub[key] = [c.chunk_id for c in sorted(chunks, key=lambda c: c.ordinal)]
            for claim in claims:
                self.claims[claim.claim_id] = claim
            for ds in datasets:
                self.datasets[ds.dataset_id] = ds
            self.publications[key] = pub
            self.append_event(
                VersionEvent(
                    timestamp=utc_now(),
                    actor=actor,
                    action="commit",
                    subject_id=f"{pub.pub_id}@v{pub.version}",
                    details=f"title={pub.title!r}",
                )
            )
            return key

    def versions_of(self, pub_id: str) -> list[int]:
        return sorted(v for (p, v) in self.publications if p == pub_id)

    def latest_version(self, pub_id: str, include_superseded: bool = False) -> Optional[int]:
        versions = [
            v
            for (p, v), pub in self.publications.items()
            if p == pub_id and (include_superseded or pub.status != "superseded")
        ]
        return max(versions) if versions else None

    def get_publication(self, pub_id: str, version: Optional[int] = None) -> PublicationBundle:
        with self._lock:
            if version is None:
                version = self.latest_version(pub_id)
                if version is None:
                    if self.versions_of(pub_id):
                        raise NotFoundError(f"all versions of {pub_id} are superseded; request one explicitly")
                    raise NotFoundError(f"unknown publication {pub_id}")
            key = (pub_id, version)
            pub = self.publications.get(key)
            if pub is None:
                raise NotFoundError(f"unknown publication version {pub_id}@v{version}")
            chunk_list = [self.chunks[cid] for cid in self.chunks_by_pub.get(key, [])]
            claims = sorted(
                (c for c in self.claims.values() if (c.source.pub_id, c.source.version) == key),
                key=lambda c: c.claim_id,
            )
            datasets = sorted(
                (d for d in self.datasets.values() if (d.pub_id, d.version) == key),
                key=lambda d: d.dataset_id,
            )
            return PublicationBundle(pub, chunk_list, claims, datasets)

    def is_superseded(self, pub_id: str, version: int) -> bool:
        pub = self.publications.get((pub_id, version))
        return pub is not None and pub.status == "superseded"

    def mark_superseded(self, old: tuple[str, int], new: tuple[str, int], actor: str) -> None:
        with self._lock:
            if old == new:
                raise StoreError("a publication version cannot supersede itself")
            old_pub = self.publications.get(old)
            if old_pub is None:
                raise NotFoundError(f"unknown publication version {old[0]}@v{old[1]}")
            if new not in self.publications:
                raise NotFoundError(f"unknown publication version {new[0]}@v{new[1]}")
            if old_pub.status == "superseded":
                return  # idempotent: no duplicate event
            old_pub.status = "superseded"
            self._append("publication", old_pub.to_dict())
            self.append_event(
                VersionEvent(
                    timestamp=utc_now(),
                    actor=actor,
                    action="supersede",
                    subject_id=f"{old[0]}@v{old[1]}",
                    details=f"superseded_by={new[0]}@v{new[1]}",
                )
            )

    # -- events / feedback ---------------------------------------------------

    def append_event(self, event) -> None:
        with self._lock:
            if isinstance(event, FeedbackEvent):
                self._append("feedback", event.to_dict())
                self.feedback.append(event)
                return
            if self.events:
                last_ts = self.events[-1].timestamp
                if event.timestamp < last_ts:
                    original = event.timestamp
                    event.timestamp = last_ts
                    suffix = f"original_timestamp={original}"
                    event.details = f"{event.details}; {suffix}" if event.details else suffix
            self._append("event", event.to_dict())
            self.events.append(event)

    def events_since(self, since: Optional[str] = None) -> list[VersionEvent]:
        if since is None:
            return list(self.events)
        return [e for e in self.events if e.timestamp >= since]

    def events_for(self, pub_id: str) -> list[VersionEvent]:
        prefix = f"{pub_id}@v"
        return [e for e in self.events if e.subject_id == pub_id or e.subject_id.startswith(prefix)]

    # -- claims / entities / synthesis ---------------------------------------

    def append_claim(self, claim: ClaimTriple) -> None:
        with self._lock:
            if claim.claim_id in self.claims:
                return
            self._append("claim", claim.to_dict())
            self.claims[claim.claim_id] = claim

    def append_entity(self, entity: Entity) -> None:
        with self._lock:
            self._append("entity", entity.to_dict())
            self.entities[entity.entity_id] = entity

    def put_synthesis(self, record: SynthesisRecord) -> None:
        with self._lock:
            self._append("synthesis", record.to_dict())
            self.synthesis[record.group] = record

    def delete_synthesis(self, group: str) -> None:
        with self._lock:
            if group not in self.synthesis:
                return
            self._append("synthesis", {"group": group, "deleted": True})
            self.synthesis.pop(group, None)

    def get_synthesis(self, group: str) -> Optional[SynthesisRecord]:
        return self.synthesis.get(group)

    def get_dataset(self, dataset_id: str) -> DatasetRecord:
        ds = self.datasets.get(dataset_id)
        if ds is None:
            raise NotFoundError(f"unknown dataset {dataset_id}")
        return ds

    def all_chunks(self) -> Iterable[Chunk]:
        return self.chunks.values()

    def known_pub_ids(self) -> set[str]:
        return {p for (p, _v) in self.publications}


def open_store(root_path: str | Path, recover: bool = False) -> Store:
    """Open (creating if needed) a store rooted at ``root_path``.

    With ``recover=True`` malformed lines are skipped instead of raising,
    keeping every complete record intact.
    """
    root = Path(root_path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreError(f"cannot create store root {root}: {exc}") from exc
    if not os.access(root, os.R_OK):
        raise StoreError(f"store root {root} is not readable")
    store = Store(root)
    store._load(recover=recover)
    return store
