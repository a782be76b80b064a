"""Operator control channel.

A session runner can expose a JSON-over-websocket side channel that a
browser console (or a test) attaches to. Events flow out with a contiguous
sequence number and are buffered, so a client that reconnects can ask for a
replay from the last seq it saw. Commands flow in and land on a queue the
runner consumes.

Event frame:   {"ev": <seq>, "type": <str>, "data": {...}}
Command frame: {"cmd": <str>, ...}

Event types: hello, phase, transcript, tool_state, media, stats, surface,
interaction. Commands: subscribe {from_seq}, utterance {text},
frame {jpeg_b64}, mode {value}, approval {call_id, verdict}.
"""
from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)

DEFAULT_CONTROL_PORT = 18790
EVENT_BUFFER_LIMIT = 4096


@dataclass
class ControlEvent:
    seq: int
    type: str
    data: dict[str, Any]

    def encode(self) -> str:
        return json.dumps({"ev": self.seq, "type": self.type, "data": self.data},
                          sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class ControlHub:
    commands: asyncio.Queue = field(default_factory=asyncio.Queue)
    events: list[ControlEvent] = field(default_factory=list)
    _next_seq: int = 1
    _subscribers: set[asyncio.Queue] = field(default_factory=set)

    def broadcast(self, type_: str, data: dict[str, Any]) -> ControlEvent:
        event = ControlEvent(seq=self._next_seq, type=type_, data=data)
        self._next_seq += 1
        self.events.append(event)
        if len(self.events) > EVENT_BUFFER_LIMIT:
            del self.events[: len(self.events) - EVENT_BUFFER_LIMIT]
        for queue in list(self._subscribers):
            queue.put_nowait(event)
        return event

    def subscribe(self, from_seq: int = 0) -> tuple[list[ControlEvent], asyncio.Queue]:
        """Return (buffered events after from_seq, live queue)."""
        queue: asyncio.Queue = asyncio.Queue()
        self._subscribers.add(queue)
        backlog = [e for e in self.events if e.seq > from_seq]
        return backlog, queue

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        self._subscribers.discard(queue)


async def serve_control(hub: ControlHub, host: str, port: int, ready_event=None):
    """Run the control websocket endpoint until cancelled."""
    from websockets.asyncio.server import serve

    async def handler(ws):
        queue: asyncio.Queue | None = None
        sender: asyncio.Task | None = None

        async def pump(live: asyncio.Queue):
            while True:
                event = await live.get()
                await ws.send(event.encode())

        try:
            async for raw in ws:
                try:
                    cmd = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send(json.dumps({"error": "commands must be JSON"}))
                    continue
                name = cmd.get("cmd")
                if name == "subscribe":
                    if sender is not None:
                        sender.cancel()
                        if queue is not None:
                            hub.unsubscribe(queue)
                    backlog, queue = hub.subscribe(int(cmd.get("from_seq", 0)))
                    for event in backlog:
                        await ws.send(event.encode())
                    sender = asyncio.create_task(pump(queue))
                elif name in ("utterance", "frame", "mode", "approval"):
                    await hub.commands.put(cmd)
                else:
                    await ws.send(json.dumps({"error": f"unknown command {name!r}"}))
        finally:
            if sender is not None:
                sender.cancel()
            if queue is not None:
                hub.unsubscribe(queue)

    async with serve(handler, host, port) as server:
        if ready_event is not None:
            ready_event.set()
        logger.info("control channel on ws://%s:%d", host, port)
        await server.serve_forever()
