import math
import random

import pytest

from agentloop.memory import (MemoryEntry, MemoryStore, MemoryStoreError, RetrievalQuery,
                              score, tokenize)

HOUR_MS = 3_600_000
NOW = 1_770_000_000_000


def entry(text, age_hours=0.0, importance=0.5, id=""):
    return MemoryEntry(text=text, created_at=int(NOW - age_hours * HOUR_MS),
                       importance=importance, id=id or None or "")


class TestAppend:
    def test_round_trips_byte_equal(self, tmp_path):
        path = tmp_path / "memory.jsonl"
        store = MemoryStore(path)
        store.append(entry("the wifi password is on the welcome sheet"))
        raw = path.read_bytes()
        reloaded = MemoryStore(path)
        assert len(reloaded) == 1
        assert reloaded.entries[0] == store.entries[0]
        store2 = MemoryStore(tmp_path / "other.jsonl")
        store2.append(reloaded.entries[0])
        assert (tmp_path / "other.jsonl").read_bytes() == raw

    def test_empty_text_rejected(self):
        with pytest.raises(MemoryStoreError, match="non-empty"):
            MemoryEntry(text="   ", created_at=NOW)

    def test_bulk_appends_line_count_and_unique_ids(self, tmp_path):
        path = tmp_path / "memory.jsonl"
        store = MemoryStore(path)
        for i in range(10_000):
            store.append(MemoryEntry(text=f"fact number {i}", created_at=NOW + i))
        lines = path.read_text().splitlines()
        assert len(lines) == 10_000
        assert len({e.id for e in store.entries}) == 10_000

    def test_append_only_prefix_stable(self, tmp_path):
        path = tmp_path / "memory.jsonl"
        store = MemoryStore(path)
        store.append(entry("first"))
        before = path.read_bytes()
        store.append(entry("second"))
        assert path.read_bytes()[: len(before)] == before

    def test_importance_clamped(self):
        assert MemoryEntry(text="x", created_at=NOW, importance=3.0).importance == 1.0
        assert MemoryEntry(text="x", created_at=NOW, importance=-1).importance == 0.0

    def test_import_jsonl(self, tmp_path):
        dump = tmp_path / "history.jsonl"
        dump.write_text('{"text": "visited the harbor", "created_at": 1000}\n'
                        '{"text": "met the advisor", "created_at": 2000, "importance": 0.9}\n')
        store = MemoryStore(tmp_path / "memory.jsonl")
        assert store.import_jsonl(dump) == 2
        assert store.entries[0].source == "import"
        assert store.entries[1].importance == 0.9


class TestScore:
    def test_maximal_case(self):
        e = entry("coffee with nadia at the pier", age_hours=0, importance=1.0)
        scored = score(e, RetrievalQuery(text="coffee pier", now=NOW))
        assert scored.score == pytest.approx(1.0)
        assert (scored.importance, scored.recency, scored.relevancy) == (1.0, 1.0, 1.0)

    def test_half_life_closed_form(self):
        e = entry("nothing in common", age_hours=72, importance=0.0)
        scored = score(e, RetrievalQuery(text="zebra quark", now=NOW, half_life_hours=72))
        assert scored.recency == pytest.approx(0.5)
        assert scored.relevancy == 0.0
        assert scored.score == pytest.approx((0.0 + 0.5 + 0.0) / 3)

    def test_older_entry_scores_strictly_lower(self):
        newer = entry("same text here", age_hours=1)
        older = entry("same text here", age_hours=30)
        query = RetrievalQuery(text="same text", now=NOW)
        assert score(older, query).score < score(newer, query).score

    def test_recency_strictly_monotonic_in_age(self):
        rng = random.Random(11)
        query = RetrievalQuery(text="anything", now=NOW, half_life_hours=72)
        for _ in range(10_000):
            a = rng.uniform(0, 2000)
            b = a + rng.uniform(1e-6, 2000)
            ea = entry("anything", age_hours=a)
            eb = entry("anything", age_hours=b)
            assert score(eb, query).recency < score(ea, query).recency

    def test_relevancy_bounds_and_full_overlap(self):
        q = RetrievalQuery(text="alpha beta", now=NOW)
        assert score(entry("alpha beta gamma"), q).relevancy == 1.0
        assert score(entry("delta"), q).relevancy == 0.0
        assert score(entry("alpha only"), q).relevancy == 0.5

    def test_tokenization_splits_on_non_alphanumerics(self):
        assert tokenize("Add Eggs, to-my/list!") == {"add", "eggs", "to", "my", "list"}


def brute_force_rank(entries, query_text, now, half_life, k):
    """Independent oracle: recompute every score from the formulas and sort."""
    import re as _re

    def toks(text):
        return set(_re.findall(r"[a-z0-9]+", text.lower()))

    query_terms = toks(query_text)
    rows = []
    for e in entries:
        age_h = max(0.0, (now - e.created_at) / 3_600_000)
        recency = 2.0 ** (-age_h / half_life)
        relevancy = (len(query_terms & toks(e.text)) / len(query_terms)) if query_terms else 0.0
        rows.append(((e.importance + recency + relevancy) / 3.0, e))
    rows.sort(key=lambda r: (-r[0], -r[1].created_at, r[1].id))
    return [e.id for _, e in rows[:k]]


WORDS = ("coffee", "pier", "ferry", "receipt", "eggs", "poster", "meeting", "advisor",
         "harbor", "light", "cart", "memo", "wifi", "hotel", "flight", "novel")


class TestRetrieve:
    def random_store(self, rng, tmp_path, size):
        store = MemoryStore(tmp_path / f"m{rng.random()}.jsonl")
        for i in range(size):
            text = " ".join(rng.choices(WORDS, k=rng.randint(1, 6)))
            store.append(MemoryEntry(
                text=text, created_at=NOW - rng.randint(0, 400) * HOUR_MS,
                importance=rng.random(), id=f"e{i:05d}"))
        return store

    def test_matches_brute_force_on_random_stores(self, tmp_path):
        rng = random.Random(99)
        for trial in range(100):
            store = self.random_store(rng, tmp_path, rng.randint(0, 300))
            query = RetrievalQuery(text=" ".join(rng.choices(WORDS, k=rng.randint(1, 4))),
                                   now=NOW + rng.randint(0, HOUR_MS), k=rng.randint(1, 12),
                                   half_life_hours=rng.choice([24.0, 72.0, 300.0]))
            got = [s.entry.id for s in store.retrieve(query)]
            want = brute_force_rank(store.entries, query.text, query.now,
                                    query.half_life_hours, query.k)
            assert got == want, f"trial {trial}"

    def test_k_larger_than_store(self, tmp_path):
        store = MemoryStore(tmp_path / "m.jsonl")
        for i in range(3):
            store.append(entry(f"fact {i}", age_hours=i, id=f"e{i}"))
        assert len(store.retrieve(RetrievalQuery(text="fact", now=NOW, k=50))) == 3

    def test_empty_store_empty_result(self, tmp_path):
        store = MemoryStore(tmp_path / "m.jsonl")
        assert store.retrieve(RetrievalQuery(text="anything", now=NOW, k=5)) == []

    def test_no_overlap_falls_back_to_importance_and_recency(self, tmp_path):
        store = MemoryStore(tmp_path / "m.jsonl")
        store.append(entry("apple", age_hours=10, importance=0.2, id="low"))
        store.append(entry("banana", age_hours=10, importance=0.9, id="high"))
        got = [s.entry.id for s in store.retrieve(RetrievalQuery(text="zzz qqq", now=NOW, k=2))]
        # relevancy is identically zero; importance decides
        assert got == ["high", "low"]
        for s in store.retrieve(RetrievalQuery(text="zzz qqq", now=NOW, k=2)):
            assert s.relevancy == 0.0

    def test_ties_break_newer_then_id(self, tmp_path):
        store = MemoryStore(tmp_path / "m.jsonl")
        store.append(entry("same", age_hours=5, importance=0.5, id="b"))
        store.append(entry("same", age_hours=5, importance=0.5, id="a"))
        got = [s.entry.id for s in store.retrieve(RetrievalQuery(text="same", now=NOW, k=2))]
        assert got == ["a", "b"]  # same score, same created_at -> id order

    def test_invalid_query_rejected(self):
        with pytest.raises(MemoryStoreError):
            RetrievalQuery(text="x", now=NOW, k=0)
        with pytest.raises(MemoryStoreError):
            RetrievalQuery(text="x", now=NOW, half_life_hours=0)
