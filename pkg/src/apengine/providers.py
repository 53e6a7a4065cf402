"""Embedding and answer-composition backends.

The mock provider is fully deterministic (hash embedder + extractive
composer) so the whole engine is testable offline; the remote provider
speaks a small JSON wire format to an external model server.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import httpx

from .errors import DimensionMismatchError, ProviderError, UnembeddableTextError
from .models import ZOOM_WORD_BUDGETS
from .textutil import jaccard, split_sentences, tokenize

DEFAULT_DIMENSION = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass
class CompositionRequest:
    question: str
    context: list[tuple[str, str, float]]  # (chunk_id, text, score)
    zoom: str
    style_hints: Optional[str] = None


def embed_one(text: str, d: int = DEFAULT_DIMENSION) -> list[float]:
    """Signed-bucket hash embedding, L2-normalized.

    Per token: FNV-1a 64-bit hash h; bucket h mod d; sign +1 when bit 63
    of h is clear, else -1. Pure function of the token multiset.
    """
    tokens = tokenize(text)
    if not tokens:
        raise UnembeddableTextError(f"unembeddable text: {text!r}")
    vec = [0.0] * d
    for token in tokens:
        h = fnv1a64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        vec[h % d] += sign
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        # All buckets cancelled; fall back to a deterministic unit vector.
        h = fnv1a64(" ".join(tokens).encode("utf-8"))
        vec[h % d] = 1.0
        norm = 1.0
    return [v / norm for v in vec]


def compose_extractive(req: CompositionRequest) -> str:
    """Extractive composition: rank context sentences, emit with citations.

    Sentence score = parent chunk retrieval score x Jaccard overlap with the
    question tokens; top sentences fill the zoom word budget, emitted in
    descending score with ties broken by (chunk_id, sentence ordinal).
    Every emitted sentence carries its chunk's ``[chunk_id]`` marker.
    """
    if not req.context:
        raise ValueError("composition requires non-empty context")
    budget = ZOOM_WORD_BUDGETS.get(req.zoom, ZOOM_WORD_BUDGETS["abstract"])
    max_sentences = 1 if req.zoom == "headline" else None
    q_tokens = set(tokenize(req.question))

    candidates = []  # (score, chunk_id, ordinal, sentence)
    for chunk_id, text, chunk_score in req.context:
        for ordinal, sentence in enumerate(split_sentences(text)):
            overlap = jaccard(set(tokenize(sentence)), q_tokens)
            candidates.append((chunk_score * overlap, chunk_id, ordinal, sentence))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    if not candidates or candidates[0][0] <= 0.0:
        # No lexical overlap at all: fall back to the first sentence of the
        # top-scored chunk.
        top_id, top_text, _ = max(req.context, key=lambda c: c[2])
        sentences = split_sentences(top_text)
        candidates = [(0.0, top_id, 0, sentences[0])] if sentences else []
        if not candidates:
            raise ValueError("context contains no sentences")

    picked = []
    used_words = 0
    for score, chunk_id, ordinal, sentence in candidates:
        words = len(sentence.split())
        if picked and max_sentences is not None and len(picked) >= max_sentences:
            break
        if used_words + words > budget:
            if picked:
                continue
            # Nothing fits: truncate the best candidate to the budget.
            sentence = " ".join(sentence.split()[:budget]).rstrip(".!?,;") + "."
            words = len(sentence.split())
        picked.append((sentence, chunk_id))
        used_words += words
        if max_sentences is not None and len(picked) >= max_sentences:
            break

    return " ".join(f"{sentence} [{chunk_id}]" for sentence, chunk_id in picked)


class MockProvider:
    """Deterministic offline provider; the reference backend for all tests."""

    name = "mock"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension

    def embed_texts(self, texts: Sequence[str], d: Optional[int] = None) -> list[list[float]]:
        dim = d or self.dimension
        return [embed_one(t, dim) for t in texts]

    def compose_answer(self, req: CompositionRequest) -> str:
        return compose_extractive(req)


DEFAULT_COMPOSE_PROMPT = (
    "Answer the question strictly from the provided sources. End every "
    "sentence with the [chunk_id] of the source it came from. Never cite a "
    "chunk id that is not listed below, and never invent content.\n\n"
    "Question: {question}\n\nSources:\n{sources}\n"
)


@dataclass
class RemoteConfig:
    base_url: str
    model_name: str = "default"
    api_key: str = ""
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    max_in_flight: int = 8
    prompt_template: str = DEFAULT_COMPOSE_PROMPT


class RemoteProvider:
    """HTTP JSON provider: POST {model, input} -> {vectors}, {model, prompt,
    max_tokens} -> {text}. Idempotent calls retry with exponential backoff."""

    name = "remote"

    def __init__(self, config: RemoteConfig, dimension: int = DEFAULT_DIMENSION):
        if not config.base_url.startswith(("http://", "https://")):
            raise ValueError(f"base_url must be HTTP(S): {config.base_url!r}")
        self.config = config
        self.dimension = dimension
        self._sem = threading.Semaphore(config.max_in_flight)
        self._client = httpx.Client(timeout=config.timeout_s)

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        attempt = 0
        while True:
            try:
                with self._sem:
                    resp = self._client.post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                if attempt < self.config.max_retries:
                    time.sleep(self.config.backoff_base_s * (2**attempt))
                    attempt += 1
                    continue
                raise ProviderError(f"request to {url} failed: {exc}") from exc
            if resp.status_code >= 500 and attempt < self.config.max_retries:
                time.sleep(self.config.backoff_base_s * (2**attempt))
                attempt += 1
                continue
            if resp.status_code != 200:
                raise ProviderError(f"backend error from {url}", resp.status_code, resp.text)
            try:
                return resp.json()
            except ValueError as exc:
                raise ProviderError(f"malformed JSON from {url}", resp.status_code, resp.text) from exc

    def embed_texts(self, texts: Sequence[str], d: Optional[int] = None) -> list[list[float]]:
        dim = d or self.dimension
        for t in texts:
            if not tokenize(t):
                raise UnembeddableTextError(f"unembeddable text: {t!r}")
        data = self._post("/embed", {"model": self.config.model_name, "input": list(texts)})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("malformed embedding response: missing or mis-sized vectors")
        for vec in vectors:
            if len(vec) != dim:
                raise DimensionMismatchError(f"dimension mismatch d={len(vec)}, expected {dim}")
        return [[float(v) for v in vec] for vec in vectors]

    def compose_answer(self, req: CompositionRequest) -> str:
        sources = "\n".join(f"[{cid}] {text}" for cid, text, _score in req.context)
        prompt = self.config.prompt_template.format(question=req.question, sources=sources)
        budget = ZOOM_WORD_BUDGETS.get(req.zoom, ZOOM_WORD_BUDGETS["abstract"])
        data = self._post(
            "/compose",
            {"model": self.config.model_name, "prompt": prompt, "max_tokens": budget * 2},
        )
        text = data.get("text")
        if not isinstance(text, str):
            raise ProviderError("malformed composition response: missing text")
        return text
