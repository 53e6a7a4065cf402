import math
import random

import pytest

from apengine.errors import DimensionMismatchError
from apengine.index import VectorIndex
from apengine.providers import embed_one


def brute_force(items, query, k):
    """Independent oracle: exact cosine over unit vectors, ties by chunk_id."""
    scored = [(cid, sum(a * b for a, b in zip(vec, query))) for cid, vec in items]
    scored.sort(key=lambda r: (-r[1], r[0]))
    return scored[:k]


def fill(index, texts, pub="p", version=1):
    items = []
    for i, text in enumerate(texts):
        cid = f"{pub}#v{version}#c{i}"
        vec = embed_one(text)
        index.upsert(cid, vec, pub, version)
        items.append((cid, vec))
    return items


def test_self_similarity_is_top_hit():
    idx = VectorIndex()
    fill(idx, ["aspirin reduces stroke", "bananas are yellow", "rainfall in spain"])
    q = embed_one("aspirin reduces stroke")
    hits = idx.search(q, k=3)
    assert hits[0][0] == "p#v1#c0"
    assert hits[0][1] == pytest.approx(1.0, abs=1e-9)


def test_upsert_replaces():
    idx = VectorIndex()
    idx.upsert("a", embed_one("old text"), "p", 1)
    idx.upsert("a", embed_one("completely new content"), "p", 1)
    assert len(idx) == 1
    hits = idx.search(embed_one("completely new content"), k=1)
    assert hits[0][1] == pytest.approx(1.0, abs=1e-9)


def test_dimension_mismatch():
    idx = VectorIndex(dimension=256)
    with pytest.raises(DimensionMismatchError):
        idx.upsert("a", [1.0, 0.0], "p", 1)
    idx.upsert("a", embed_one("x y z"), "p", 1)
    with pytest.raises(DimensionMismatchError):
        idx.search([1.0, 0.0], k=1)


def test_matches_brute_force_oracle():
    rng = random.Random(7)
    vocab = "alpha beta gamma delta epsilon zeta eta theta iota kappa".split()
    texts = [" ".join(rng.choices(vocab, k=rng.randint(3, 8))) for _ in range(40)]
    idx = VectorIndex()
    items = fill(idx, texts)
    for qwords in (3, 5):
        q = embed_one(" ".join(rng.choices(vocab, k=qwords)))
        got = idx.search(q, k=10)
        want = brute_force(items, q, 10)
        assert [c for c, _ in got] == [c for c, _ in want]
        for (_, gs), (_, ws) in zip(got, want):
            assert gs == pytest.approx(ws, abs=1e-9)


def test_tie_break_is_ascending_chunk_id():
    idx = VectorIndex()
    vec = embed_one("identical text")
    for cid in ("p#v1#c2", "p#v1#c0", "p#v1#c1"):
        idx.upsert(cid, vec, "p", 1)
    hits = idx.search(vec, k=3)
    assert [c for c, _ in hits] == ["p#v1#c0", "p#v1#c1", "p#v1#c2"]


def test_larger_k_extends_prefix():
    idx = VectorIndex()
    fill(idx, ["one red fox", "two blue birds", "three green frogs", "four red foxes"])
    q = embed_one("red fox")
    small = idx.search(q, k=2)
    big = idx.search(q, k=4)
    assert big[:2] == small


def test_superseded_filtered_by_default():
    idx = VectorIndex()
    fill(idx, ["aspirin text"], pub="old")
    fill(idx, ["aspirin text"], pub="new")
    idx.set_superseded("old", 1)
    q = embed_one("aspirin text")
    assert [c for c, _ in idx.search(q, k=5)] == ["new#v1#c0"]
    both = {c for c, _ in idx.search(q, k=5, include_superseded=True)}
    assert both == {"old#v1#c0", "new#v1#c0"}


def test_pub_filter():
    idx = VectorIndex()
    fill(idx, ["shared words here"], pub="a")
    fill(idx, ["shared words here"], pub="b")
    hits = idx.search(embed_one("shared words here"), k=5, pub_ids={"b"})
    assert [c for c, _ in hits] == ["b#v1#c0"]


def test_remove_publication():
    idx = VectorIndex()
    fill(idx, ["text one", "text two"], pub="a")
    fill(idx, ["text three"], pub="b")
    assert idx.remove_publication("a", 1) == 2
    assert len(idx) == 1


def test_save_load_round_trip(tmp_path):
    idx = VectorIndex()
    fill(idx, ["first chunk text", "second chunk text"], pub="a")
    idx.set_superseded("a", 1)
    path = tmp_path / "index.bin"
    idx.save(path)
    loaded = VectorIndex.load(path)
    assert len(loaded) == 2
    q = embed_one("first chunk text")
    orig = idx.search(q, k=2, include_superseded=True)
    back = loaded.search(q, k=2, include_superseded=True)
    assert [c for c, _ in orig] == [c for c, _ in back]
    for (_, a), (_, b) in zip(orig, back):
        assert a == pytest.approx(b, abs=1e-6)  # float32 snapshot
    assert loaded.search(q, k=2) == []  # superseded flag survived


def test_load_rejects_truncated_snapshot(tmp_path):
    idx = VectorIndex()
    fill(idx, ["some text"])
    path = tmp_path / "index.bin"
    idx.save(path)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="corrupt"):
        VectorIndex.load(path)
