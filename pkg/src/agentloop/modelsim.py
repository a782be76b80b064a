"""Deterministic stand-in for the hosted live model.

Speaks the same wire protocol as the real session endpoint but runs a rule
table instead of a model: utterances are classified into a spoken reply or a
delegated task, every delegation is preceded by a spoken acknowledgment, and
tool results come back as spoken confirmations. Audio "speech" is a fixed
per-character tone sequence so end-to-end tests can assert exact bytes.

Identical inbound frame logs produce byte-identical outbound logs.
"""
from __future__ import annotations

import json
import logging
import random
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import wire

logger = logging.getLogger(__name__)

SYNTH_RATE = 24000
SYNTH_MS_PER_CHAR = 60
SYNTH_MAX_CHARS = 4096
SYNTH_AMPLITUDE = 8000

# Energy gate for end-of-utterance detection on the 100 ms inbound chunks.
VAD_RMS_THRESHOLD = 300.0
VAD_MIN_VOICED_CHUNKS = 2
VAD_SILENCE_CHUNKS = 3

UNINTELLIGIBLE = "(unintelligible audio)"

PAST_REFERENCE_KEYWORDS = ("yesterday", "last week", "did i", "earlier", "before")


def synthesize_audio(text: str) -> bytes:
    """Render text as PCM16 at 24 kHz, 60 ms per character, deterministic.

    Each character maps to a fixed-frequency tone; same text, same bytes.
    Over-length input is truncated with a warning.
    """
    if len(text) > SYNTH_MAX_CHARS:
        logger.warning("synthesize_audio: truncating %d chars to %d", len(text), SYNTH_MAX_CHARS)
        text = text[:SYNTH_MAX_CHARS]
    samples_per_char = SYNTH_RATE * SYNTH_MS_PER_CHAR // 1000
    if not text:
        return b""
    out = np.empty(samples_per_char * len(text), dtype=np.int16)
    t = np.arange(samples_per_char) / SYNTH_RATE
    for i, ch in enumerate(text):
        freq = 180.0 + (ord(ch) % 64) * 12.0
        tone = (SYNTH_AMPLITUDE * np.sin(2 * np.pi * freq * t)).astype(np.int16)
        out[i * samples_per_char:(i + 1) * samples_per_char] = tone
    return out.astype("<i2").tobytes()


@dataclass
class Respond:
    text: str


@dataclass
class Act:
    task: str
    ack_text: str


Decision = Respond | Act


@dataclass
class PolicyRule:
    pattern: str
    action: str  # "respond" | "act"
    text: str = ""
    ack_text: str = "Okay, on it."
    task_template: str = "{utterance}"
    requires_frame: bool = False
    no_frame_text: str = "I can't see it from here - could you hold it up to the camera?"

    def __post_init__(self) -> None:
        if self.action not in ("respond", "act"):
            raise ValueError(f"rule action must be respond/act, got {self.action!r}")
        self._re = re.compile(self.pattern, re.IGNORECASE)

    def matches(self, text: str) -> bool:
        return bool(self._re.search(text))


def default_rules() -> list[PolicyRule]:
    return [
        PolicyRule(pattern=r"^(hi|hello|hey|good (morning|afternoon|evening))\b",
                   action="respond", text="Hi. I'm listening."),
        PolicyRule(pattern=r"\b(this|these)\b.*\b(cart|shopping list|wishlist)\b",
                   action="act", ack_text="Okay, let me find that item.",
                   requires_frame=True),
        PolicyRule(pattern=(r"\b(add|send|draft|write|schedule|create|make|turn|set|save|"
                            r"remember|note|check|look up|search|find|archive|buy|order|"
                            r"download|upload|organize|open|remind)\b"),
                   action="act", ack_text="On it."),
        PolicyRule(pattern=r"^(what|who|where|when|why|how|is|are|does|do|can|tell me)\b",
                   action="act", ack_text="One moment, looking that up.",
                   task_template="look up: {utterance}"),
    ]


@dataclass
class TurnPolicy:
    rules: list[PolicyRule] = field(default_factory=default_rules)
    default_text: str = "Okay."

    @classmethod
    def from_file(cls, path: str | Path) -> "TurnPolicy":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(obj, dict):
            rules = [PolicyRule(**r) for r in obj.get("rules", [])]
            return cls(rules=rules, default_text=obj.get("default_text", "Okay."))
        return cls(rules=[PolicyRule(**r) for r in obj])


def classify_turn(user_text: str, frames_seen: int, policy: TurnPolicy) -> Decision:
    """First matching rule wins; any reference to the past always delegates."""
    if not user_text:
        raise ValueError("user_text must be non-empty")
    lowered = user_text.lower()
    if any(kw in lowered for kw in PAST_REFERENCE_KEYWORDS):
        return Act(task=user_text, ack_text="Let me check your history.")
    for rule in policy.rules:
        if not rule.matches(user_text):
            continue
        if rule.action == "respond":
            return Respond(text=rule.text or policy.default_text)
        if rule.requires_frame and frames_seen == 0:
            return Respond(text=rule.no_frame_text)
        return Act(task=rule.task_template.format(utterance=user_text), ack_text=rule.ack_text)
    return Respond(text=policy.default_text)


def load_script(path: str | Path) -> list[str]:
    """Script file: JSONL of {"utterance": ...} (or bare strings), in order."""
    utterances = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        utterances.append(obj["utterance"] if isinstance(obj, dict) else str(obj))
    return utterances


class _Vad:
    """Counts voiced/silent 100 ms chunks; fires at trailing silence."""

    def __init__(self) -> None:
        self.voiced = 0
        self.silence_run = 0

    def push(self, pcm: bytes) -> bool:
        samples = np.frombuffer(pcm, dtype="<i2").astype(np.float64)
        rms = float(np.sqrt(np.mean(samples * samples))) if len(samples) else 0.0
        if rms >= VAD_RMS_THRESHOLD:
            self.voiced += 1
            self.silence_run = 0
            return False
        if self.voiced >= VAD_MIN_VOICED_CHUNKS:
            self.silence_run += 1
            if self.silence_run >= VAD_SILENCE_CHUNKS:
                self.voiced = 0
                self.silence_run = 0
                return True
        return False


class ModelSession:
    """Server-side turn engine for one connection. Pure frames-in/frames-out.

    call_ids come from a seeded RNG so identical inbound frame logs produce
    byte-identical outbound logs.
    """

    def __init__(self, policy: TurnPolicy | None = None, script: Iterable[str] = (),
                 seed: int = 0):
        self.policy = policy or TurnPolicy()
        self.script: deque[str] = deque(script)
        self.configured = False
        self.frames_seen_turn = 0
        self.pending_call_id: str | None = None
        self.pending_task: str | None = None
        self._seq = 0
        self._vad = _Vad()
        self._last_client_seq: int | None = None
        self._rng = random.Random(seed)

    def _new_call_id(self) -> str:
        return f"{self._rng.getrandbits(128):032x}"

    # -- outbound helpers --------------------------------------------------

    def _msg(self, kind: str, payload: dict) -> wire.LiveMessage:
        msg = wire.LiveMessage(kind, self._seq, payload)
        self._seq += 1
        return msg

    def _speech(self, text: str) -> list[wire.LiveMessage]:
        pcm = synthesize_audio(text)
        out = []
        max_bytes = SYNTH_RATE * 2  # 1 s per audio_out frame
        for start in range(0, len(pcm), max_bytes):
            out.append(self._msg(wire.KIND_AUDIO_OUT, wire.audio_out_payload(pcm[start:start + max_bytes])))
        return out

    def _error(self, code: str, message: str) -> wire.LiveMessage:
        return self._msg(wire.KIND_ERROR, {"code": code, "message": message})

    # -- inbound handling ----------------------------------------------------

    def handle(self, msg: wire.LiveMessage) -> list[wire.LiveMessage]:
        if self._last_client_seq is not None and msg.seq <= self._last_client_seq:
            return [self._error("seq", f"client seq not increasing ({msg.seq})")]
        self._last_client_seq = msg.seq

        if not self.configured:
            if msg.kind != wire.KIND_SETUP:
                return [self._error("protocol", "first message must be setup")]
            self.configured = True
            return [self._msg(wire.KIND_TURN_COMPLETE, {})]

        if msg.kind == wire.KIND_SETUP:
            return [self._error("protocol", "setup may only be sent once")]

        if msg.kind == wire.KIND_AUDIO_IN:
            if msg.payload["sample_rate"] != wire.AUDIO_IN_RATE:
                return [self._error("protocol", f"audio_in must be {wire.AUDIO_IN_RATE} Hz")]
            if self._vad.push(msg.audio_bytes()):
                text = self.script.popleft() if self.script else UNINTELLIGIBLE
                return self._run_turn(text)
            return []

        if msg.kind == wire.KIND_FRAME_IN:
            self.frames_seen_turn += 1
            return []

        if msg.kind == wire.KIND_TRANSCRIPT:
            if msg.payload["role"] != "user" or not msg.payload["final"]:
                return [self._error("protocol", "client transcript must be a final user entry")]
            return self._run_turn(msg.payload["text"])

        if msg.kind == wire.KIND_TOOL_RESULT:
            return self._finish_tool_turn(msg)

        return [self._error("protocol", f"unexpected client kind {msg.kind!r}")]

    def _run_turn(self, utterance: str) -> list[wire.LiveMessage]:
        if self.pending_call_id is not None:
            # A delegated task is still out; hold the floor.
            logger.info("utterance %r ignored while tool call pending", utterance)
            return []
        out = [self._msg(wire.KIND_TRANSCRIPT,
                         {"role": "user", "text": utterance, "final": True})]
        if utterance == UNINTELLIGIBLE:
            decision: Decision = Respond(text="Sorry, I didn't catch that.")
        else:
            decision = classify_turn(utterance, self.frames_seen_turn, self.policy)
        out.extend(self.emit_turn(decision))
        return out

    def emit_turn(self, decision: Decision) -> list[wire.LiveMessage]:
        out: list[wire.LiveMessage] = []
        if isinstance(decision, Respond):
            words = decision.text.split()
            partial = " ".join(words[: max(1, len(words) // 2)])
            if partial != decision.text:
                out.append(self._msg(wire.KIND_TRANSCRIPT,
                                     {"role": "assistant", "text": partial, "final": False}))
            out.append(self._msg(wire.KIND_TRANSCRIPT,
                                 {"role": "assistant", "text": decision.text, "final": True}))
            out.extend(self._speech(decision.text))
            out.append(self._msg(wire.KIND_TURN_COMPLETE, {}))
            self.frames_seen_turn = 0
            return out
        # Delegation: spoken acknowledgment strictly before the tool call,
        # then the turn stays open until the result comes back.
        call_id = self._new_call_id()
        self.pending_call_id = call_id
        self.pending_task = decision.task
        out.append(self._msg(wire.KIND_TRANSCRIPT,
                             {"role": "assistant", "text": decision.ack_text, "final": True}))
        out.extend(self._speech(decision.ack_text))
        out.append(self._msg(wire.KIND_TOOL_CALL,
                             {"call_id": call_id, "name": "execute",
                              "args": {"task": decision.task}}))
        return out

    def _finish_tool_turn(self, msg: wire.LiveMessage) -> list[wire.LiveMessage]:
        call_id = msg.payload["call_id"]
        if call_id != self.pending_call_id:
            return [self._error("tool_result", f"no pending call {call_id!r}")]
        self.pending_call_id = None
        self.pending_task = None
        status = msg.payload["status"]
        summary = msg.payload["result"]
        if status == "ok":
            text = f"Done. {summary}" if summary else "Done."
        elif status == "timeout":
            text = "That ran out of time before finishing."
        else:
            text = f"I couldn't finish that: {summary}" if summary else "I couldn't finish that."
        out = [self._msg(wire.KIND_TRANSCRIPT, {"role": "assistant", "text": text, "final": True})]
        out.extend(self._speech(text))
        out.append(self._msg(wire.KIND_TURN_COMPLETE, {}))
        self.frames_seen_turn = 0
        return out


def _make_handler(policy: TurnPolicy | None, script_list: list[str]):
    async def handler(ws):
        session = ModelSession(policy=policy, script=list(script_list))
        logger.info("model session opened: %s", ws.remote_address)
        async for frame in ws:
            try:
                msg = wire.decode_message(frame)
            except wire.WireError as exc:
                reply = session._error("wire", str(exc))
                await ws.send(wire.encode_message(reply).decode("utf-8"))
                continue
            for reply in session.handle(msg):
                await ws.send(wire.encode_message(reply).decode("utf-8"))
        logger.info("model session closed")

    return handler


async def start_model_server(host: str = "127.0.0.1", port: int = 0,
                             policy: TurnPolicy | None = None,
                             script: Iterable[str] = ()):
    """Bind and return (server, port); caller closes the server."""
    from websockets.asyncio.server import serve

    server = await serve(_make_handler(policy, list(script)), host, port)
    bound_port = server.sockets[0].getsockname()[1]
    return server, bound_port


async def serve_model(host: str, port: int, policy: TurnPolicy | None = None,
                      script: Iterable[str] = (), ready_event=None):
    """Run the mock model endpoint until cancelled."""
    server, _ = await start_model_server(host, port, policy, script)
    if ready_event is not None:
        ready_event.set()
    async with server:
        await server.serve_forever()
