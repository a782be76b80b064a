"""Wire format for the live session channel.

One message per frame, UTF-8 JSON with no embedded newlines, so a capture
file is plain JSONL. Binary payloads (PCM16 audio, JPEG frames) travel
base64-encoded. Encoding is canonical (sorted keys, no whitespace) so that
encode(decode(frame)) is byte-identical and captures can be diffed.
"""
from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

KIND_SETUP = "setup"
KIND_AUDIO_IN = "audio_in"
KIND_FRAME_IN = "frame_in"
KIND_AUDIO_OUT = "audio_out"
KIND_TRANSCRIPT = "transcript"
KIND_TOOL_CALL = "tool_call"
KIND_TOOL_RESULT = "tool_result"
KIND_TURN_COMPLETE = "turn_complete"
KIND_ERROR = "error"

ALL_KINDS = (
    KIND_SETUP,
    KIND_AUDIO_IN,
    KIND_FRAME_IN,
    KIND_AUDIO_OUT,
    KIND_TRANSCRIPT,
    KIND_TOOL_CALL,
    KIND_TOOL_RESULT,
    KIND_TURN_COMPLETE,
    KIND_ERROR,
)

AUDIO_IN_RATE = 16000
AUDIO_OUT_RATE = 24000

# Required payload fields per kind. Extra fields are tolerated and preserved
# so older clients keep working against newer peers.
_REQUIRED: dict[str, dict[str, type | tuple[type, ...]]] = {
    KIND_SETUP: {"model_id": str, "system_prompt": str, "tools": list},
    KIND_AUDIO_IN: {"audio_b64": str, "sample_rate": int},
    KIND_FRAME_IN: {"jpeg_b64": str, "capture_ts": int},
    KIND_AUDIO_OUT: {"audio_b64": str, "sample_rate": int},
    KIND_TRANSCRIPT: {"role": str, "text": str, "final": bool},
    KIND_TOOL_CALL: {"call_id": str, "name": str, "args": dict},
    KIND_TOOL_RESULT: {"call_id": str, "status": str, "result": str},
    KIND_TURN_COMPLETE: {},
    KIND_ERROR: {"code": str, "message": str},
}


class WireError(ValueError):
    """Raised for malformed frames or protocol-invalid messages."""


@dataclass
class LiveMessage:
    kind: str
    seq: int
    payload: dict[str, Any] = field(default_factory=dict)

    def audio_bytes(self) -> bytes:
        """Decode the base64 audio body (audio_in / audio_out only)."""
        return base64.b64decode(self.payload["audio_b64"], validate=True)

    def jpeg_bytes(self) -> bytes:
        return base64.b64decode(self.payload["jpeg_b64"], validate=True)


def validate_message(msg: LiveMessage) -> None:
    if msg.kind not in _REQUIRED:
        raise WireError(f"unknown message kind {msg.kind!r}")
    if not isinstance(msg.seq, int) or msg.seq < 0:
        raise WireError(f"bad seq {msg.seq!r}")
    if not isinstance(msg.payload, dict):
        raise WireError("payload must be an object")
    for name, typ in _REQUIRED[msg.kind].items():
        if name not in msg.payload:
            raise WireError(f"{msg.kind} payload missing {name!r}")
        if not isinstance(msg.payload[name], typ):
            raise WireError(f"{msg.kind} payload field {name!r} has wrong type")
    if msg.kind in (KIND_AUDIO_IN, KIND_AUDIO_OUT):
        try:
            base64.b64decode(msg.payload["audio_b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise WireError(f"invalid base64 audio body: {exc}") from exc
    if msg.kind == KIND_FRAME_IN:
        try:
            base64.b64decode(msg.payload["jpeg_b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise WireError(f"invalid base64 frame body: {exc}") from exc
    if msg.kind == KIND_TRANSCRIPT and msg.payload["role"] not in ("user", "assistant"):
        raise WireError(f"transcript role must be user/assistant, got {msg.payload['role']!r}")


def encode_message(msg: LiveMessage) -> bytes:
    """Canonical single-frame encoding (validates first)."""
    validate_message(msg)
    obj = {"kind": msg.kind, "payload": msg.payload, "seq": msg.seq}
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    if "\n" in text:
        raise WireError("frame contains a newline")
    return text.encode("utf-8")


def decode_message(frame: bytes | str) -> LiveMessage:
    if isinstance(frame, bytes):
        frame = frame.decode("utf-8")
    try:
        obj = json.loads(frame)
    except json.JSONDecodeError as exc:
        raise WireError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("frame must be a JSON object")
    try:
        msg = LiveMessage(kind=obj["kind"], seq=obj["seq"], payload=obj.get("payload", {}))
    except KeyError as exc:
        raise WireError(f"frame missing field {exc}") from exc
    validate_message(msg)
    return msg


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def audio_in_payload(pcm: bytes, capture_ts: int) -> dict[str, Any]:
    return {"audio_b64": b64(pcm), "sample_rate": AUDIO_IN_RATE, "capture_ts": capture_ts}


def audio_out_payload(pcm: bytes) -> dict[str, Any]:
    return {"audio_b64": b64(pcm), "sample_rate": AUDIO_OUT_RATE}


def frame_in_payload(jpeg: bytes, capture_ts: int) -> dict[str, Any]:
    return {"jpeg_b64": b64(jpeg), "capture_ts": capture_ts}


# --- capture files -----------------------------------------------------------
#
# A capture is JSONL: {"dir": "in"|"out", "msg": {...frame object...}} per line.
# "out" means client -> server.


@dataclass
class CaptureLine:
    direction: str  # "in" or "out"
    msg: LiveMessage


class CaptureWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = self.path.open("w", encoding="utf-8")

    def write(self, direction: str, msg: LiveMessage) -> None:
        if direction not in ("in", "out"):
            raise ValueError(f"direction must be in/out, got {direction!r}")
        frame = encode_message(msg).decode("utf-8")
        self._fh.write(json.dumps({"dir": direction, "msg": json.loads(frame)},
                                  sort_keys=True, separators=(",", ":"), ensure_ascii=False))
        self._fh.write("\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "CaptureWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def read_capture(path: str | Path) -> Iterator[CaptureLine]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                direction = obj["dir"]
                msg = LiveMessage(kind=obj["msg"]["kind"], seq=obj["msg"]["seq"],
                                  payload=obj["msg"].get("payload", {}))
                validate_message(msg)
            except (KeyError, TypeError, json.JSONDecodeError, WireError) as exc:
                raise WireError(f"{path}:{lineno}: bad capture line: {exc}") from exc
            if direction not in ("in", "out"):
                raise WireError(f"{path}:{lineno}: bad direction {direction!r}")
            yield CaptureLine(direction=direction, msg=msg)
