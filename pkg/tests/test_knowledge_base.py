import random

import numpy as np
import pytest

from aerocoach.knowledge_base import (
    Chunk,
    DimensionMismatch,
    EmptyDocument,
    EmptyIndex,
    FlatIndex,
    HashEmbedder,
    KnowledgeDoc,
    build_context,
    build_index,
    default_corpus_dir,
    ingest,
    load_corpus,
)


def doc(body, doc_id="d1", tier="basic", tags=()):
    return KnowledgeDoc(doc_id=doc_id, tier=tier, title=doc_id, body=body, tags=tuple(tags))


def words(text):
    return " ".join(text.split())


# --- chunking ---------------------------------------------------------------


def test_paragraphs_become_chunks_in_order():
    body = "first paragraph\n\nsecond paragraph\n\nthird paragraph"
    chunks = ingest(doc(body), max_chunk_chars=18)
    assert [c.text for c in chunks] == ["first paragraph", "second paragraph", "third paragraph"]
    assert [c.position for c in chunks] == [0, 1, 2]
    assert [c.chunk_id for c in chunks] == ["d1#000", "d1#001", "d1#002"]


def test_short_body_single_chunk():
    chunks = ingest(doc("just one short body"), max_chunk_chars=600)
    assert len(chunks) == 1
    assert chunks[0].text == "just one short body"


def test_chunks_cover_body_over_fixture_corpus():
    for d in load_corpus(default_corpus_dir()):
        chunks = ingest(d, max_chunk_chars=400)
        assert words(" ".join(c.text for c in chunks)) == words(d.body)
        assert all(len(c.text) <= 400 for c in chunks)
        assert [c.position for c in chunks] == list(range(len(chunks)))


def test_oversized_paragraph_is_split_at_words():
    body = "word " * 300
    chunks = ingest(doc(body.strip()), max_chunk_chars=100)
    assert all(len(c.text) <= 100 for c in chunks)
    assert words(" ".join(c.text for c in chunks)) == words(body)


def test_empty_document_rejected():
    with pytest.raises(EmptyDocument):
        ingest(doc("   \n  "))


# --- embedding ----------------------------------------------------------------


def test_embedder_deterministic_and_normalized():
    emb = HashEmbedder(256)
    a = emb.embed("steep turn bank angle")
    b = emb.embed("steep turn bank angle")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)


def test_embedder_similarity_tracks_token_overlap():
    emb = HashEmbedder(256)
    query = emb.embed("steep turn bank angle")
    steep = emb.embed("a steep turn holds a 45 degree bank angle at constant altitude")
    gear = emb.embed("the landing gear lever extends the wheels before touchdown")
    assert float(query @ steep) > float(query @ gear)


# --- index ---------------------------------------------------------------------


def mk_index(n, dim=32, seed=0):
    rng = np.random.default_rng(seed)
    index = FlatIndex(dim)
    vecs = []
    for i in range(n):
        v = rng.normal(size=dim)
        v = (v / np.linalg.norm(v)).astype(np.float32)
        index.add(Chunk(f"c{i:04d}", f"d{i % 7}", "basic", f"text {i}", i), v)
        vecs.append(v)
    return index, vecs


def brute_force(index, vecs, query, k, tier=None):
    scored = []
    for chunk, v in zip(index.chunks, vecs):
        if tier is not None and chunk.tier != tier:
            continue
        scored.append((float(np.dot(v.astype(np.float64), query)), chunk.chunk_id))
    scored.sort(key=lambda s: (-s[0], s[1]))
    return [cid for _, cid in scored[:k]]


def test_self_similarity_is_one():
    index, vecs = mk_index(10)
    hits = index.search(vecs[3], k=1)
    assert hits[0].chunk.chunk_id == "c0003"
    assert hits[0].score == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_query_scores_zero():
    index = FlatIndex(4)
    index.add(Chunk("a", "d", "basic", "t", 0), np.array([1, 0, 0, 0], dtype=np.float32))
    hits = index.search(np.array([0.0, 1.0, 0.0, 0.0]), k=1)
    assert hits[0].score == pytest.approx(0.0, abs=1e-9)


def test_matches_brute_force_with_ties():
    index, vecs = mk_index(50, seed=2)
    # duplicate vectors force score ties resolved by chunk_id
    dup = vecs[10]
    index.add(Chunk("c9998", "dx", "basic", "dup1", 0), dup)
    index.add(Chunk("c9999", "dx", "basic", "dup2", 1), dup)
    vecs = vecs + [dup, dup]
    rng = np.random.default_rng(7)
    for _ in range(25):
        q = rng.normal(size=32)
        q /= np.linalg.norm(q)
        got = [h.chunk.chunk_id for h in index.search(q, k=7)]
        assert got == brute_force(index, vecs, q, 7)


def test_prefix_property():
    index, vecs = mk_index(30, seed=4)
    q = np.asarray(vecs[0], dtype=np.float64)
    small = {h.chunk.chunk_id for h in index.search(q, k=3)}
    large = {h.chunk.chunk_id for h in index.search(q, k=6)}
    assert small <= large


def test_ranks_consecutive_and_sorted():
    index, vecs = mk_index(20, seed=5)
    hits = index.search(vecs[1], k=8)
    assert [h.rank for h in hits] == list(range(1, 9))
    assert all(a.score >= b.score for a, b in zip(hits, hits[1:]))


def test_filters_respected():
    emb = HashEmbedder(64)
    index = FlatIndex(64)
    index.add(Chunk("a", "d1", "basic", "lift and drag", 0), emb.embed("lift and drag"))
    index.add(
        Chunk("b", "d2", "mission_specific", "steep turn entry", 0, tags=("task:steep_turn",)),
        emb.embed("steep turn entry"),
    )
    q = emb.embed("steep turn entry")
    hits = index.search(q, k=5, tier="mission_specific")
    assert [h.chunk.chunk_id for h in hits] == ["b"]
    hits = index.search(q, k=5, require_tags=("task:steep_turn",))
    assert [h.chunk.chunk_id for h in hits] == ["b"]
    assert index.search(q, k=5, tier="aircraft_type") == []


def test_empty_index_and_dimension_errors():
    index = FlatIndex(8)
    with pytest.raises(EmptyIndex):
        index.search(np.zeros(8), k=1)
    index.add(Chunk("a", "d", "basic", "t", 0), np.ones(8, dtype=np.float32) / np.sqrt(8))
    with pytest.raises(DimensionMismatch):
        index.search(np.zeros(4), k=1)
    with pytest.raises(DimensionMismatch):
        index.add(Chunk("b", "d", "basic", "t", 1), np.ones(4, dtype=np.float32))


def test_persistence_round_trip(tmp_path):
    index, vecs = mk_index(25, seed=6)
    path = tmp_path / "kb.index"
    index.save(path)
    loaded = FlatIndex.load(path)
    assert len(loaded) == len(index)
    rng = np.random.default_rng(8)
    for _ in range(10):
        q = rng.normal(size=32)
        q /= np.linalg.norm(q)
        a = [(h.chunk.chunk_id, h.score) for h in index.search(q, k=5)]
        b = [(h.chunk.chunk_id, h.score) for h in loaded.search(q, k=5)]
        assert a == b


# --- context assembly -----------------------------------------------------------


def hit(text, cid, rank):
    from aerocoach.knowledge_base import RetrievalHit

    return RetrievalHit(Chunk(cid, "d", "basic", text, 0), 1.0 - rank * 0.1, rank)


def test_context_truncates_at_whole_chunks():
    hits = [hit("a" * 100, "c1", 1), hit("b" * 100, "c2", 2)]
    text, prov = build_context(hits, char_budget=150)
    assert text == "a" * 100
    assert prov == ["c1"]


def test_context_includes_all_under_budget():
    hits = [hit("aaa", "c1", 1), hit("bbb", "c2", 2)]
    text, prov = build_context(hits, char_budget=1000)
    assert text == "aaa\n\nbbb"
    assert prov == ["c1", "c2"]


def test_context_empty_hits():
    text, prov = build_context([], char_budget=100)
    assert text == "" and prov == []


# --- corpus -----------------------------------------------------------------------


def test_fixture_corpus_loads_with_tiers_and_tags():
    docs = load_corpus(default_corpus_dir())
    assert len(docs) >= 8
    tiers = {d.tier for d in docs}
    assert tiers == {"basic", "aircraft_type", "mission_specific"}
    steep = [d for d in docs if "task:steep_turn" in d.tags]
    assert steep, "corpus must tag the steep-turn doc"


def test_corpus_retrieval_ranks_steep_turn_first():
    emb = HashEmbedder(256)
    index = build_index(load_corpus(default_corpus_dir()), emb)
    hits = index.search(emb.embed("steep turn bank angle 45 degrees altitude"), k=3)
    assert hits[0].chunk.doc_id == "task_steep_turn"
