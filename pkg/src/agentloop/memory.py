"""Append-only personal memory with importance/recency/relevancy ranking.

Entries live one-per-line in memory.jsonl and are never rewritten. Retrieval
scores every entry - stores stay small enough that a full scan is the honest
baseline - as the plain average of three [0,1] components:

  importance   stored salience, caller-supplied
  recency      2^(-age_hours / half_life_hours)
  relevancy    fraction of query terms present in the entry text

Keyword overlap instead of embeddings keeps the ranking dependency-free and
directly checkable against a hand-rolled sort.
"""
from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

DEFAULT_HALF_LIFE_HOURS = 72.0
DEFAULT_IMPORTANCE = 0.5

_TOKEN_RE = re.compile(r"[a-z0-9]+")

VALID_SOURCES = ("voice", "tool", "import")


class MemoryStoreError(ValueError):
    pass


def tokenize(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


@dataclass
class MemoryEntry:
    text: str
    created_at: int  # epoch ms
    importance: float = DEFAULT_IMPORTANCE
    tags: list[str] = field(default_factory=list)
    source: str = "voice"
    id: str = ""

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise MemoryStoreError("memory text must be non-empty")
        if self.source not in VALID_SOURCES:
            raise MemoryStoreError(f"bad source {self.source!r}")
        self.importance = min(1.0, max(0.0, float(self.importance)))
        if not self.id:
            self.id = uuid.uuid4().hex

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "created_at": self.created_at,
                "importance": self.importance, "tags": self.tags, "source": self.source}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "MemoryEntry":
        return cls(text=obj["text"], created_at=int(obj["created_at"]),
                   importance=float(obj.get("importance", DEFAULT_IMPORTANCE)),
                   tags=list(obj.get("tags", [])), source=obj.get("source", "voice"),
                   id=obj["id"])


@dataclass
class RetrievalQuery:
    text: str
    now: int  # epoch ms
    k: int = 5
    half_life_hours: float = DEFAULT_HALF_LIFE_HOURS

    def __post_init__(self) -> None:
        if self.k < 1:
            raise MemoryStoreError("k must be >= 1")
        if self.half_life_hours <= 0:
            raise MemoryStoreError("half_life_hours must be positive")


@dataclass
class ScoredEntry:
    entry: MemoryEntry
    score: float
    importance: float
    recency: float
    relevancy: float


def score(entry: MemoryEntry, query: RetrievalQuery) -> ScoredEntry:
    age_hours = max(0.0, (query.now - entry.created_at) / 3_600_000)
    recency = 2.0 ** (-age_hours / query.half_life_hours)
    query_terms = tokenize(query.text)
    if query_terms:
        relevancy = len(query_terms & tokenize(entry.text)) / len(query_terms)
    else:
        relevancy = 0.0
    combined = (entry.importance + recency + relevancy) / 3.0
    return ScoredEntry(entry=entry, score=combined, importance=entry.importance,
                       recency=recency, relevancy=relevancy)


class MemoryStore:
    """JSONL-backed store; one writer, readers see the load-time snapshot."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: list[MemoryEntry] = []
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        self.entries = []
        for lineno, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                self.entries.append(MemoryEntry.from_dict(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise MemoryStoreError(f"{self.path}:{lineno}: bad memory line: {exc}") from exc

    def append(self, entry: MemoryEntry) -> str:
        line = json.dumps(entry.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        self.entries.append(entry)
        return entry.id

    def import_jsonl(self, path: str | Path, source: str = "import") -> int:
        """Bulk-load an external history dump; returns the number imported."""
        count = 0
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            entry = MemoryEntry(
                text=obj["text"], created_at=int(obj["created_at"]),
                importance=float(obj.get("importance", DEFAULT_IMPORTANCE)),
                tags=list(obj.get("tags", [])), source=source,
                id=obj.get("id", ""))
            self.append(entry)
            count += 1
        return count

    def retrieve(self, query: RetrievalQuery) -> list[ScoredEntry]:
        """Top-k by score desc, ties broken newer-first then by id."""
        scored = [score(entry, query) for entry in self.entries]
        scored.sort(key=lambda s: (-s.score, -s.entry.created_at, s.entry.id))
        return scored[: query.k]

    def __len__(self) -> int:
        return len(self.entries)
