"""Text normalization, tokenization and sentence handling.

All downstream determinism (embedding, composition, grounding checks)
rests on these rules, so they are deliberately simple: lowercase
alphanumeric tokens, punctuation-rule sentence splits, bracketed
citation markers.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[0-9a-z]+")
_WS_RE = re.compile(r"\s+")
MARKER_RE = re.compile(r"\[([^\[\]\s]+)\]")

_TERMINALS = ".!?"


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; everything else is a separator."""
    return _TOKEN_RE.findall(text.lower())


def normalize_name(name: str) -> str:
    """Entity-name normalization: trim, collapse whitespace, lowercase."""
    return _WS_RE.sub(" ", name.strip()).lower()


def collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text.strip())


def word_count(text: str) -> int:
    return len(text.split())


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def split_sentences(text: str) -> list[str]:
    """Split on ., ! or ? followed by whitespace or end, keeping the delimiter.

    Abbreviations are not special-cased; the trailing fragment without a
    terminal is returned as its own sentence.
    """
    sentences = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINALS:
            while i < n and text[i] in _TERMINALS:
                i += 1
            if i >= n or text[i].isspace():
                piece = text[start:i].strip()
                if piece:
                    sentences.append(piece)
                start = i
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def split_cited_sentences(text: str) -> list[str]:
    """Split answer text into sentence units, keeping trailing citation markers.

    A unit ends at terminal punctuation (outside brackets); any whitespace
    plus ``[marker]`` groups that immediately follow belong to the same unit,
    so "A works. [c1] B fails. [c2]" yields two units each carrying a marker.
    """
    units = []
    i = 0
    start = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            close = text.find("]", i)
            i = close + 1 if close != -1 else n
            continue
        if ch in _TERMINALS:
            while i < n and text[i] in _TERMINALS:
                i += 1
            if i < n and not text[i].isspace():
                continue
            end = i
            j = i
            while True:
                k = j
                while k < n and text[k].isspace():
                    k += 1
                if k < n and text[k] == "[":
                    close = text.find("]", k)
                    if close == -1:
                        break
                    j = close + 1
                    end = j
                else:
                    break
            piece = text[start:end].strip()
            if piece:
                units.append(piece)
            i = end
            start = i
            continue
        i += 1
    tail = text[start:].strip()
    if tail:
        units.append(tail)
    return units


def extract_markers(sentence: str) -> list[str]:
    return MARKER_RE.findall(sentence)


def strip_markers(text: str) -> str:
    return collapse_ws(MARKER_RE.sub("", text))
