"""Exact cosine-similarity search over chunk embeddings.

Brute-force scan over unit vectors (so cosine is a dot product), with
metadata filtering for superseded versions. Desk-scale corpora make
exactness affordable; approximate structures can be slotted in behind
the same contract later.
"""

from __future__ import annotations

import json
import struct
import threading
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError


class IndexEntry:
    __slots__ = ("chunk_id", "vector", "pub_id", "version", "superseded")

    def __init__(self, chunk_id: str, vector: np.ndarray, pub_id: str, version: int, superseded: bool = False):
        self.chunk_id = chunk_id
        self.vector = vector
        self.pub_id = pub_id
        self.version = version
        self.superseded = superseded


class VectorIndex:
    def __init__(self, dimension: int = 256):
        self.dimension = dimension
        self._entries: dict[str, IndexEntry] = {}
        self._lock = threading.RLock()
        self._matrix: Optional[np.ndarray] = None
        self._ids: list[str] = []

    def __len__(self) -> int:
        return len(self._entries)

    def _check_dim(self, vector: Sequence[float]) -> np.ndarray:
        arr = np.asarray(vector, dtype=np.float64)
        if arr.shape != (self.dimension,):
            raise DimensionMismatchError(f"dimension mismatch d={arr.shape[0] if arr.ndim == 1 else arr.shape}, index d={self.dimension}")
        return arr

    def upsert(self, chunk_id: str, vector: Sequence[float], pub_id: str, version: int, superseded: bool = False) -> None:
        arr = self._check_dim(vector)
        with self._lock:
            self._entries[chunk_id] = IndexEntry(chunk_id, arr, pub_id, version, superseded)
            self._matrix = None

    def remove_publication(self, pub_id: str, version: int) -> int:
        with self._lock:
            doomed = [cid for cid, e in self._entries.items() if e.pub_id == pub_id and e.version == version]
            for cid in doomed:
                del self._entries[cid]
            if doomed:
                self._matrix = None
            return len(doomed)

    def set_superseded(self, pub_id: str, version: int, flag: bool = True) -> int:
        with self._lock:
            hit = 0
            for entry in self._entries.values():
                if entry.pub_id == pub_id and entry.version == version:
                    entry.superseded = flag
                    hit += 1
            return hit

    def _snapshot(self) -> tuple[list[str], np.ndarray, list[IndexEntry]]:
        with self._lock:
            if self._matrix is None:
                self._ids = sorted(self._entries)
                if self._ids:
                    self._matrix = np.stack([self._entries[cid].vector for cid in self._ids])
                else:
                    self._matrix = np.zeros((0, self.dimension))
            return self._ids, self._matrix, [self._entries[cid] for cid in self._ids]

    def search(
        self,
        query: Sequence[float],
        k: int,
        include_superseded: bool = False,
        pub_ids: Optional[set[str]] = None,
    ) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = self._check_dim(query)
        ids, matrix, entries = self._snapshot()
        if not ids:
            return []
        scores = matrix @ q
        results = []
        for cid, entry, score in zip(ids, entries, scores):
            if entry.superseded and not include_superseded:
                continue
            if pub_ids is not None and entry.pub_id not in pub_ids:
                continue
            results.append((cid, float(score)))
        # ids are already ascending, so a stable sort on -score keeps the
        # lexicographic tie-break.
        results.sort(key=lambda r: -r[1])
        return results[:k]

    # -- optional on-disk snapshot ------------------------------------------

    def save(self, path: str | Path) -> None:
        ids, matrix, entries = self._snapshot()
        header = {
            "dimension": self.dimension,
            "count": len(ids),
            "entries": [
                {"chunk_id": e.chunk_id, "pub_id": e.pub_id, "version": e.version, "superseded": e.superseded}
                for e in entries
            ],
        }
        blob = json.dumps(header).encode("utf-8")
        with Path(path).open("wb") as fh:
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(matrix.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        with Path(path).open("rb") as fh:
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            dim = header["dimension"]
            count = header["count"]
            if len(header["entries"]) != count:
                raise ValueError(f"index snapshot corrupt: count {count} != id table {len(header['entries'])}")
            raw = fh.read()
        expected = count * dim * 4
        if len(raw) != expected:
            raise ValueError(f"index snapshot corrupt: expected {expected} vector bytes, got {len(raw)}")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(count, dim).astype(np.float64)
        idx = cls(dimension=dim)
        for meta, row in zip(header["entries"], matrix):
            idx.upsert(meta["chunk_id"], row, meta["pub_id"], meta["version"], meta["superseded"])
        return idx
