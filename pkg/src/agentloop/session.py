"""Client-side session state machine.

Pure logic, no I/O: the async runner in client.py feeds frames in and ships
the frames and effects this module hands back. Keeping it synchronous makes
the protocol rules (setup-once, seq continuity, transcript sealing, pending
tool-call accounting) directly unit- and replay-testable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Union

from . import wire
from .media import AudioChunk, VideoFrame
from .tools import ToolCall, ToolResult


class SessionError(RuntimeError):
    pass


class Phase(str, Enum):
    CONNECTING = "connecting"
    READY = "ready"
    STREAMING = "streaming"
    AWAITING_TOOL = "awaiting_tool"
    CLOSED = "closed"
    FAILED = "failed"


_TOOL_NAME_RE = re.compile(r"^[a-z_]+$")


@dataclass
class ToolDeclaration:
    name: str
    description: str = ""
    parameters: dict[str, str] = field(default_factory=dict)  # name -> string|number|boolean

    def __post_init__(self) -> None:
        if not _TOOL_NAME_RE.match(self.name):
            raise SessionError(f"tool name {self.name!r} must match [a-z_]+")
        for ptype in self.parameters.values():
            if ptype not in ("string", "number", "boolean"):
                raise SessionError(f"bad parameter type {ptype!r} in tool {self.name!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "description": self.description, "parameters": self.parameters}


def default_tools() -> list[ToolDeclaration]:
    return [ToolDeclaration(
        name="execute",
        description="Hand a task to the personal agent gateway and wait for the outcome.",
        parameters={"task": "string"},
    )]


DEFAULT_SYSTEM_PROMPT = (
    "You are a hands-free voice assistant. You can hear the wearer and see what "
    "they see. You cannot act on apps, services, devices, memory or the web "
    "yourself; delegate every such request through the execute tool. Speak a "
    "short acknowledgment out loud before you delegate, and speak the outcome "
    "once it returns. Keep replies brief and conversational."
)


@dataclass
class SessionConfig:
    model_id: str = "live-mock-1"
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    generation_params: dict[str, Any] = field(default_factory=lambda: {"temperature": 0.7})
    tools: list[ToolDeclaration] = field(default_factory=default_tools)
    endpoint: str = "ws://127.0.0.1:18788"
    reconnect_max_attempts: int = 3
    reconnect_backoff_ms: int = 250

    def __post_init__(self) -> None:
        if not self.model_id or not self.endpoint:
            raise SessionError("model_id and endpoint must be non-empty")
        names = [t.name for t in self.tools]
        if len(names) != len(set(names)):
            raise SessionError("tool names must be unique")

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "SessionConfig":
        tools = [ToolDeclaration(**t) for t in obj.get("tools", [])] or default_tools()
        kwargs = {k: obj[k] for k in ("model_id", "system_prompt", "generation_params",
                                      "endpoint", "reconnect_max_attempts",
                                      "reconnect_backoff_ms") if k in obj}
        return cls(tools=tools, **kwargs)


@dataclass
class TranscriptEntry:
    role: str
    text: str
    final: bool
    ts: int


class Transcript:
    """Ordered entries; at most one open (non-final) entry per role.

    Partials replace the open entry in place; final=true seals it. Sealed
    entries are never touched again.
    """

    def __init__(self) -> None:
        self.entries: list[TranscriptEntry] = []
        self._open: dict[str, int] = {}  # role -> index of non-final entry

    def apply(self, role: str, text: str, final: bool, ts: int) -> TranscriptEntry:
        idx = self._open.get(role)
        if idx is None:
            entry = TranscriptEntry(role=role, text=text, final=final, ts=ts)
            self.entries.append(entry)
            if not final:
                self._open[role] = len(self.entries) - 1
            return entry
        entry = self.entries[idx]
        entry.text = text
        entry.ts = ts
        entry.final = final
        if final:
            del self._open[role]
        return entry

    def sealed(self) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.final]


@dataclass
class SessionStats:
    messages_in: int = 0
    messages_out: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    reconnects: int = 0


# Effects handed to the runner by handle_incoming().
@dataclass
class Playback:
    pcm: bytes
    sample_rate: int


@dataclass
class Dispatch:
    call: ToolCall


@dataclass
class Surface:
    code: str
    message: str


Effect = Union[Playback, Dispatch, Surface]

MEDIA_PHASES = (Phase.READY, Phase.STREAMING, Phase.AWAITING_TOOL)


class SessionCore:
    """Protocol brain for one session: framing out, demultiplexing in."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.phase = Phase.CONNECTING
        self.transcript = Transcript()
        self.pending_calls: set[str] = set()
        self.stats = SessionStats()
        self._out_seq = 0
        self._last_in_seq: int | None = None
        self._setup_sent = False
        self.clock_ms = 0  # advanced by the runner; transcript timestamps

    # -- outbound framing ------------------------------------------------

    def _next_out(self) -> int:
        seq = self._out_seq
        self._out_seq += 1
        return seq

    def setup_message(self) -> wire.LiveMessage:
        if self._setup_sent:
            raise SessionError("setup already sent for this session")
        self._setup_sent = True
        payload = {
            "model_id": self.cfg.model_id,
            "system_prompt": self.cfg.system_prompt,
            "generation_params": self.cfg.generation_params,
            "tools": [t.to_dict() for t in self.cfg.tools],
        }
        return self._count_out(wire.LiveMessage(wire.KIND_SETUP, self._next_out(), payload))

    def mark_ready(self) -> None:
        """Server acknowledged setup."""
        if self.phase is not Phase.CONNECTING:
            raise SessionError(f"cannot become ready from {self.phase.value}")
        self.phase = Phase.READY

    def mark_failed(self) -> None:
        self.phase = Phase.FAILED

    def close(self) -> None:
        self.phase = Phase.CLOSED

    def reset_for_reconnect(self) -> None:
        """Fresh seq numbering and setup slot; transcript survives."""
        self.stats.reconnects += 1
        self._out_seq = 0
        self._last_in_seq = None
        self._setup_sent = False
        self.pending_calls.clear()
        self.phase = Phase.CONNECTING

    def media_message(self, item: AudioChunk | VideoFrame) -> wire.LiveMessage:
        if self.phase not in MEDIA_PHASES:
            raise SessionError(f"cannot send media while {self.phase.value}")
        if isinstance(item, AudioChunk):
            msg = wire.LiveMessage(wire.KIND_AUDIO_IN, self._next_out(),
                                   wire.audio_in_payload(item.to_bytes(), item.capture_ts))
        elif isinstance(item, VideoFrame):
            msg = wire.LiveMessage(wire.KIND_FRAME_IN, self._next_out(),
                                   wire.frame_in_payload(item.jpeg_bytes, item.capture_ts))
        else:
            raise SessionError(f"not a media item: {type(item).__name__}")
        if self.phase is Phase.READY:
            self.phase = Phase.STREAMING
        return self._count_out(msg)

    def user_text_message(self, text: str) -> wire.LiveMessage:
        """Typed input injected as a final user transcript frame."""
        if self.phase not in MEDIA_PHASES:
            raise SessionError(f"cannot send input while {self.phase.value}")
        msg = wire.LiveMessage(wire.KIND_TRANSCRIPT, self._next_out(),
                               {"role": "user", "text": text, "final": True})
        if self.phase is Phase.READY:
            self.phase = Phase.STREAMING
        return self._count_out(msg)

    def tool_result_message(self, result: ToolResult, payload: dict[str, Any]) -> wire.LiveMessage:
        if result.call_id not in self.pending_calls:
            raise SessionError(f"tool result for unknown call_id {result.call_id!r}")
        msg = wire.LiveMessage(wire.KIND_TOOL_RESULT, self._next_out(), payload)
        self.pending_calls.discard(result.call_id)
        if not self.pending_calls and self.phase is Phase.AWAITING_TOOL:
            self.phase = Phase.STREAMING
        return self._count_out(msg)

    def _count_out(self, msg: wire.LiveMessage) -> wire.LiveMessage:
        self.stats.messages_out += 1
        self.stats.bytes_out += len(wire.encode_message(msg))
        return msg

    # -- inbound demux ----------------------------------------------------

    def handle_incoming(self, msg: wire.LiveMessage) -> list[Effect]:
        self.stats.messages_in += 1
        self.stats.bytes_in += len(wire.encode_message(msg))
        if self._last_in_seq is not None and msg.seq <= self._last_in_seq:
            return [Surface("seq", f"server seq not increasing ({msg.seq} after {self._last_in_seq})")]
        self._last_in_seq = msg.seq

        if msg.kind == wire.KIND_AUDIO_OUT:
            rate = msg.payload["sample_rate"]
            if rate != wire.AUDIO_OUT_RATE:
                return [Surface("protocol", f"audio_out at {rate} Hz, expected {wire.AUDIO_OUT_RATE}")]
            return [Playback(pcm=msg.audio_bytes(), sample_rate=rate)]

        if msg.kind == wire.KIND_TRANSCRIPT:
            self.transcript.apply(msg.payload["role"], msg.payload["text"],
                                  msg.payload["final"], self.clock_ms)
            return []

        if msg.kind == wire.KIND_TOOL_CALL:
            try:
                call = ToolCall(call_id=msg.payload["call_id"], name=msg.payload["name"],
                                args=msg.payload["args"], issued_at=self.clock_ms)
            except Exception as exc:
                return [Surface("tool_call", str(exc))]
            declared = {t.name for t in self.cfg.tools}
            if call.name not in declared:
                return [Surface("tool_call", f"undeclared tool {call.name!r}")]
            self.pending_calls.add(call.call_id)
            self.phase = Phase.AWAITING_TOOL
            return [Dispatch(call)]

        if msg.kind == wire.KIND_TURN_COMPLETE:
            if self.phase is Phase.STREAMING:
                self.phase = Phase.READY
            return []

        if msg.kind == wire.KIND_ERROR:
            return [Surface(msg.payload["code"], msg.payload["message"])]

        if msg.kind in (wire.KIND_SETUP, wire.KIND_AUDIO_IN, wire.KIND_FRAME_IN,
                        wire.KIND_TOOL_RESULT):
            return [Surface("protocol", f"unexpected server->client kind {msg.kind!r}")]

        # Unknown kinds never kill the session (forward compatibility).
        return [Surface("protocol", f"unknown message kind {msg.kind!r}")]

    # -- invariants (used by tests and the replay harness) -----------------

    def check_invariants(self) -> list[str]:
        problems = []
        if self.phase is Phase.AWAITING_TOOL and not self.pending_calls:
            problems.append("awaiting_tool with no pending calls")
        if self.pending_calls and self.phase in (Phase.READY, Phase.STREAMING):
            problems.append(f"{len(self.pending_calls)} pending calls outside awaiting_tool")
        open_per_role: dict[str, int] = {}
        for entry in self.transcript.entries:
            if not entry.final:
                open_per_role[entry.role] = open_per_role.get(entry.role, 0) + 1
        if any(count > 1 for count in open_per_role.values()):
            problems.append("more than one open transcript entry for a role")
        return problems
