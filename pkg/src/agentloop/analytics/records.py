"""Interaction records: the unit of usage analytics.

One record per voice-initiated interaction, with its tool executions, timing
and category; one session record per live session. Both persist as JSONL
(interactions.jsonl / sessions.jsonl) in a log directory.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..tools import StepRecord

CATEGORIES = ("communicate", "retrieve", "save", "recall", "shop", "control")

INTERACTIONS_FILE = "interactions.jsonl"
SESSIONS_FILE = "sessions.jsonl"


class RecordError(ValueError):
    pass


@dataclass
class ToolCallRecord:
    name: str
    steps: list[StepRecord] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ToolCallRecord":
        return cls(name=obj["name"], steps=[StepRecord.from_dict(s) for s in obj["steps"]])


@dataclass
class InteractionRecord:
    id: str
    session_id: str
    started_at: int
    utterance: str
    first_response_at: int | None = None
    completed_at: int | None = None
    used_camera: bool = False
    tool_calls: list[ToolCallRecord] = field(default_factory=list)
    category: str = "retrieve"
    data_sources: set[str] = field(default_factory=set)
    responded: bool = True

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise RecordError(f"unknown category {self.category!r}")
        if self.first_response_at is not None and self.first_response_at < self.started_at:
            raise RecordError("first_response_at predates started_at")
        if self.completed_at is not None:
            floor = self.first_response_at if self.first_response_at is not None else self.started_at
            if self.completed_at < floor:
                raise RecordError("completed_at predates the response")

    @property
    def chain_depth(self) -> int:
        return sum(len(c.steps) for c in self.tool_calls)

    @property
    def latency_ms(self) -> int | None:
        if self.first_response_at is None:
            return None
        return self.first_response_at - self.started_at

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "session_id": self.session_id, "started_at": self.started_at,
            "first_response_at": self.first_response_at, "completed_at": self.completed_at,
            "utterance": self.utterance, "used_camera": self.used_camera,
            "tool_calls": [c.to_dict() for c in self.tool_calls],
            "category": self.category, "data_sources": sorted(self.data_sources),
            "responded": self.responded,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "InteractionRecord":
        return cls(
            id=obj["id"], session_id=obj["session_id"], started_at=int(obj["started_at"]),
            first_response_at=obj.get("first_response_at"),
            completed_at=obj.get("completed_at"), utterance=obj["utterance"],
            used_camera=bool(obj.get("used_camera", False)),
            tool_calls=[ToolCallRecord.from_dict(c) for c in obj.get("tool_calls", [])],
            category=obj.get("category", "retrieve"),
            data_sources=set(obj.get("data_sources", [])),
            responded=bool(obj.get("responded", True)),
        )


@dataclass
class SessionRecord:
    session_id: str
    participant: str
    interaction_ids: list[str] = field(default_factory=list)
    duration_ms: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"session_id": self.session_id, "participant": self.participant,
                "interaction_ids": self.interaction_ids, "duration_ms": self.duration_ms}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "SessionRecord":
        return cls(session_id=obj["session_id"], participant=obj.get("participant", "p0"),
                   interaction_ids=list(obj.get("interaction_ids", [])),
                   duration_ms=int(obj.get("duration_ms", 0)))


# Classifier: deterministic keyword cascade, first hit wins, and any
# non-empty utterance lands somewhere (the largest bucket is the fallback).
_COMMUNICATE = re.compile(
    r"\b(email|e-mail|mail|message|text|slack|imessage|whatsapp|telegram|send|reply|"
    r"archive|inbox|post)\b", re.IGNORECASE)
_SAVE = re.compile(r"\b(save|remember|note|jot|record|memorize|capture)\b", re.IGNORECASE)
_RECALL = re.compile(
    r"\b(what|when|where|who)\b.*\b(did|have|was|were)\s+(i|we)\b"
    r"|\byesterday\b|\blast (week|month|year|time)\b|\bearlier\b"
    r"|\bwhat happened\b|\bremind me what\b", re.IGNORECASE)
_SHOP = re.compile(r"\b(cart|buy|purchase|orders?|prices?|reviews?|ratings?|shop|"
                   r"shopping|restock|wishlist)\b", re.IGNORECASE)
_CONTROL = re.compile(
    r"\b(turn (on|off)|light|lamp|thermostat|device|upload|download|file|folder|organize|"
    r"run|execute|deploy|restart)\b", re.IGNORECASE)


def categorize(utterance: str, tool_calls: list[ToolCallRecord] | None = None) -> str:
    """Map an utterance to one of the six usage categories."""
    if not utterance or not utterance.strip():
        raise RecordError("utterance must be non-empty")
    if _COMMUNICATE.search(utterance):
        return "communicate"
    if _SAVE.search(utterance):
        return "save"
    if _RECALL.search(utterance):
        return "recall"
    if _SHOP.search(utterance):
        return "shop"
    if _CONTROL.search(utterance):
        return "control"
    return "retrieve"


class InteractionLog:
    """Append-only writer/reader for a log directory."""

    def __init__(self, log_dir: str | Path):
        self.dir = Path(log_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.interactions_path = self.dir / INTERACTIONS_FILE
        self.sessions_path = self.dir / SESSIONS_FILE

    def log_interaction(self, record: InteractionRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)
        with self.interactions_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def log_session(self, record: SessionRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)
        with self.sessions_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def read_interactions(self) -> tuple[list[InteractionRecord], int]:
        """Parse the log; returns (records, count of malformed lines skipped)."""
        records, bad = [], 0
        if not self.interactions_path.exists():
            return records, bad
        for line in self.interactions_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                records.append(InteractionRecord.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError):
                bad += 1
        return records, bad

    def read_sessions(self) -> tuple[list[SessionRecord], int]:
        records, bad = [], 0
        if not self.sessions_path.exists():
            return records, bad
        for line in self.sessions_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                records.append(SessionRecord.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError):
                bad += 1
        return records, bad
