"""Async session runner: the client side of the see-and-act loop.

Wires together the media pipeline (WAV/frame-dir adapters), the session
state machine, the tool router and the interaction log. One task uploads
media, one task demultiplexes the server stream; tool calls spawn short
dispatch tasks that post to the gateway and feed the result back over the
session. An optional control channel mirrors everything for an operator
console and can gate sensitive tool calls behind explicit approval.
"""
from __future__ import annotations

import asyncio
import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

from . import wire
from .adapters import iter_frame_dir, read_wav
from .analytics.records import InteractionLog, InteractionRecord, SessionRecord, ToolCallRecord, categorize
from .control import ControlHub, serve_control
from .gateway.skills import DEFAULT_SENSITIVE_SKILLS, SkillError, parse_task
from .media import MediaMode, MediaPipeline, PipelineConfig, VideoFrame
from .modelsim import VAD_RMS_THRESHOLD
from .playback import PlaybackQueue
from .router import RouterConfig, ToolRouter, format_result
from .session import (Dispatch, Phase, Playback, SessionConfig, SessionCore, Surface)
from .tools import STATUS_ERROR, ToolCall, ToolResult

logger = logging.getLogger(__name__)

SKILL_DATA_SOURCE = {
    "notes": "files", "email_draft": "email", "calendar": "calendar", "cart": "web",
    "device": "device", "memory": "memory", "web_lookup": "web", "files": "files",
}


class SessionFailed(RuntimeError):
    pass


@dataclass
class RunnerOptions:
    audio_path: Path | None = None
    frames_dir: Path | None = None
    mode: MediaMode = MediaMode.AUDIO_AND_VIDEO
    pipeline_cfg: PipelineConfig = field(default_factory=PipelineConfig)
    paced: bool = False                # sleep to real capture timestamps
    capture_path: Path | None = None
    log_dir: Path | None = None
    control_host: str = "127.0.0.1"
    control_port: int | None = None
    auto_approve: bool = True
    sensitive_skills: tuple[str, ...] = DEFAULT_SENSITIVE_SKILLS
    approval_timeout_s: float | None = None  # None: wait indefinitely
    expected_turns: int | None = None  # close as soon as this many turns finish
    quiet_close_s: float = 1.0         # otherwise close after this much silence
    max_run_s: float = 60.0
    playback_time_scale: float = 1.0   # 1.0 = real-time playback drain, 0 = instant


@dataclass
class RunSummary:
    session_id: str
    phase: str
    turns: int = 0
    chunks_sent: int = 0
    frames_sent: int = 0
    interactions: list[InteractionRecord] = field(default_factory=list)
    surfaced: list[tuple[str, str]] = field(default_factory=list)
    reconnects: int = 0


class _InteractionTracker:
    """Builds one InteractionRecord per detected user turn."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.current: InteractionRecord | None = None
        self.done: list[InteractionRecord] = []
        self.frames_this_turn = 0

    def now(self) -> int:
        return int(time.time() * 1000)

    def on_frame_sent(self) -> None:
        self.frames_this_turn += 1

    def on_user_utterance(self, text: str) -> InteractionRecord:
        if self.current is not None:
            self._finish(aborted=True)
        self.current = InteractionRecord(
            id=f"i-{uuid.uuid4().hex[:10]}", session_id=self.session_id,
            started_at=self.now(), utterance=text,
            used_camera=self.frames_this_turn > 0,
            category=categorize(text), responded=False)
        return self.current

    def on_model_activity(self) -> None:
        if self.current is not None and self.current.first_response_at is None:
            self.current.first_response_at = self.now()
            self.current.responded = True

    def on_tool_call(self, call: ToolCall) -> None:
        if self.current is not None:
            self.current.tool_calls.append(ToolCallRecord(name=call.name))

    def on_tool_result(self, call: ToolCall, result: ToolResult) -> None:
        if self.current is None:
            return
        for record in self.current.tool_calls:
            if record.name == call.name and not record.steps:
                record.steps = list(result.steps)
                break
        try:
            skill, _ = parse_task(call.task)
            self.current.data_sources.add(SKILL_DATA_SOURCE.get(skill, "web"))
        except SkillError:
            pass
        if any(s.step_kind in ("browser", "web_search") for s in result.steps):
            self.current.data_sources.add("web")

    def on_turn_complete(self) -> None:
        if self.current is not None:
            self._finish()
        self.frames_this_turn = 0

    def _finish(self, aborted: bool = False) -> None:
        assert self.current is not None
        record = self.current
        record.completed_at = max(self.now(), record.first_response_at or record.started_at)
        self.done.append(record)
        self.current = None


class SessionRunner:
    def __init__(self, session_cfg: SessionConfig, router_cfg: RouterConfig | None = None,
                 options: RunnerOptions | None = None):
        self.cfg = session_cfg
        self.router_cfg = router_cfg or RouterConfig()
        self.opts = options or RunnerOptions()
        self.core = SessionCore(session_cfg)
        self.playback = PlaybackQueue()
        self._pipeline = MediaPipeline(cfg=self.opts.pipeline_cfg, mode=self.opts.mode)
        self.hub = ControlHub() if self.opts.control_port is not None else None
        self.session_id = f"sess-{uuid.uuid4().hex[:10]}"
        self.tracker = _InteractionTracker(self.session_id)
        self._capture = None
        self._ws = None
        self._send_lock = asyncio.Lock()
        self._turns_done = 0
        self._last_activity = 0.0
        self._approvals: dict[str, asyncio.Future] = {}
        self._tool_tasks: set[asyncio.Task] = set()
        self._drainer: asyncio.Task | None = None
        self._started_monotonic = 0.0
        self.summary = RunSummary(session_id=self.session_id, phase=Phase.CONNECTING.value)

    # -- plumbing -------------------------------------------------------------

    def _emit(self, type_: str, data: dict) -> None:
        if self.hub is not None:
            self.hub.broadcast(type_, data)

    async def _send(self, msg: wire.LiveMessage) -> None:
        async with self._send_lock:
            frame = wire.encode_message(msg).decode("utf-8")
            await self._ws.send(frame)
        if self._capture is not None:
            self._capture.write("out", msg)

    def _clock_ms(self) -> int:
        return int((time.monotonic() - self._started_monotonic) * 1000)

    # -- connection -----------------------------------------------------------

    async def _connect_with_retries(self) -> None:
        attempts = self.cfg.reconnect_max_attempts
        delay_s = self.cfg.reconnect_backoff_ms / 1000
        attempt = 0
        self.backoff_delays_ms: list[float] = []
        while True:
            try:
                self._ws = await connect(self.cfg.endpoint, open_timeout=5)
                return
            except (OSError, asyncio.TimeoutError) as exc:
                if attempt >= attempts:
                    self.core.mark_failed()
                    raise SessionFailed(
                        f"could not reach {self.cfg.endpoint} after "
                        f"{attempts + 1} attempts: {exc}") from exc
                logger.warning("connect attempt %d failed (%s); retrying in %.0f ms",
                               attempt + 1, exc, delay_s * 1000)
                slept = time.monotonic()
                await asyncio.sleep(delay_s)
                self.backoff_delays_ms.append((time.monotonic() - slept) * 1000)
                delay_s *= 2
                attempt += 1

    async def _handshake(self) -> None:
        try:
            await self._send(self.core.setup_message())
            raw = await asyncio.wait_for(self._ws.recv(), timeout=5)
            msg = wire.decode_message(raw)
        except Exception:
            await self._ws.close()
            self.core.mark_failed()
            raise
        if self._capture is not None:
            self._capture.write("in", msg)
        if msg.kind != wire.KIND_TURN_COMPLETE:
            await self._ws.close()
            self.core.mark_failed()
            raise SessionFailed(f"expected setup ack, got {msg.kind}")
        self.core.handle_incoming(msg)
        self.core.mark_ready()
        self._emit("phase", {"phase": self.core.phase.value})

    # -- media upload -----------------------------------------------------------

    def _media_events(self):
        """Merge audio blocks and raw frames into one ts-ordered list."""
        events: list[tuple[int, str, object]] = []
        if self.opts.audio_path is not None:
            audio = read_wav(self.opts.audio_path)
            block_frames = audio.sample_rate // 5  # 200 ms blocks
            from .media import RawAudio
            step = block_frames * audio.channels
            ts = 0
            for start in range(0, len(audio.samples), step):
                block = audio.samples[start:start + step]
                if len(block) % audio.channels:
                    block = block[: len(block) - len(block) % audio.channels]
                if not len(block):
                    continue
                events.append((ts, "audio", RawAudio(block, audio.sample_rate, audio.channels)))
                ts += len(block) // audio.channels * 1000 // audio.sample_rate
        if self.opts.frames_dir is not None:
            for rgb, capture_ts in iter_frame_dir(self.opts.frames_dir,
                                                  self.opts.pipeline_cfg.source_fps):
                events.append((capture_ts, "frame", rgb))
        events.sort(key=lambda e: (e[0], e[1]))
        return events

    async def _sender(self) -> None:
        pipeline = self._pipeline
        started = time.monotonic()
        for ts, kind, item in self._media_events():
            if self.core.phase in (Phase.CLOSED, Phase.FAILED):
                return
            if self.opts.paced:
                target = started + ts / 1000
                delay = target - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
            if kind == "audio":
                for chunk in pipeline.push_audio(item):
                    await self._send_chunk(chunk)
            else:
                frame = pipeline.push_frame(item, ts)
                if frame is not None:
                    await self._send_frame(frame)
            await asyncio.sleep(0)  # let the receiver breathe between blocks
        final = pipeline.flush_audio()
        if final is not None:
            await self._send_chunk(final)

    async def _send_chunk(self, chunk) -> None:
        import numpy as np
        samples = chunk.samples.astype(np.float64)
        rms = float(np.sqrt(np.mean(samples * samples))) if len(samples) else 0.0
        if rms >= VAD_RMS_THRESHOLD and self.playback.pending:
            dropped = self.playback.barge_in()
            self._emit("media", {"barge_in_dropped": dropped})
        await self._send(self.core.media_message(chunk))
        self.summary.chunks_sent += 1
        self._last_activity = time.monotonic()

    async def _send_frame(self, frame: VideoFrame) -> None:
        await self._send(self.core.media_message(frame))
        self.summary.frames_sent += 1
        self.tracker.on_frame_sent()
        self._emit("media", {"frames_sent": self.summary.frames_sent,
                             "chunks_sent": self.summary.chunks_sent,
                             "mode": self._pipeline.mode.value})
        self._last_activity = time.monotonic()

    # -- inbound ---------------------------------------------------------------

    async def _receiver(self) -> None:
        try:
            async for raw in self._ws:
                msg = wire.decode_message(raw)
                if self._capture is not None:
                    self._capture.write("in", msg)
                self.core.clock_ms = self._clock_ms()
                await self._handle_message(msg)
        except ConnectionClosed:
            logger.info("server closed the session channel")

    async def _handle_message(self, msg: wire.LiveMessage) -> None:
        self._last_activity = time.monotonic()
        if msg.kind == wire.KIND_TRANSCRIPT:
            role = msg.payload["role"]
            if role == "user" and msg.payload["final"]:
                record = self.tracker.on_user_utterance(msg.payload["text"])
                self._emit("interaction", {"id": record.id, "utterance": record.utterance,
                                           "category": record.category})
            elif role == "assistant":
                self.tracker.on_model_activity()
        effects = self.core.handle_incoming(msg)
        if msg.kind == wire.KIND_TRANSCRIPT:
            self._emit("transcript", dict(msg.payload))
        if msg.kind == wire.KIND_TURN_COMPLETE:
            self.tracker.on_turn_complete()
            self._turns_done += 1
            self._emit("phase", {"phase": self.core.phase.value, "turns": self._turns_done})
        for effect in effects:
            if isinstance(effect, Playback):
                self.tracker.on_model_activity()
                self.playback.schedule(effect.pcm, effect.sample_rate)
                self._ensure_drainer()
            elif isinstance(effect, Dispatch):
                self.tracker.on_tool_call(effect.call)
                task = asyncio.create_task(self._run_tool_call(effect.call))
                self._tool_tasks.add(task)
                task.add_done_callback(self._tool_tasks.discard)
            elif isinstance(effect, Surface):
                logger.warning("surfaced: %s: %s", effect.code, effect.message)
                self.summary.surfaced.append((effect.code, effect.message))
                self._emit("surface", {"code": effect.code, "message": effect.message})

    def _ensure_drainer(self) -> None:
        """Walk queued audio at (scaled) real time so barge-in has something
        to cancel; headless, so "playing" just means holding the chunk."""
        if self._drainer is not None and not self._drainer.done():
            return

        async def drain():
            while True:
                chunk = self.playback.pop_next()
                if chunk is None:
                    return
                await asyncio.sleep(chunk.duration_ms / 1000 * self.opts.playback_time_scale)

        self._drainer = asyncio.create_task(drain())

    # -- tool calls --------------------------------------------------------------

    def _needs_approval(self, call: ToolCall) -> str | None:
        if self.opts.auto_approve:
            return None
        try:
            skill, _ = parse_task(call.task)
        except SkillError:
            return None
        return skill if skill in self.opts.sensitive_skills else None

    async def _run_tool_call(self, call: ToolCall) -> None:
        skill = self._needs_approval(call)
        if skill is not None:
            self._emit("tool_state", {"call_id": call.call_id, "name": call.name,
                                      "task": call.task, "state": "pending-approval",
                                      "skill": skill})
            future: asyncio.Future = asyncio.get_running_loop().create_future()
            self._approvals[call.call_id] = future
            try:
                verdict = await asyncio.wait_for(future, self.opts.approval_timeout_s)
            except asyncio.TimeoutError:
                verdict = "deny"
            finally:
                self._approvals.pop(call.call_id, None)
            if verdict != "approve":
                result = ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                                    summary="denied by operator")
                self._emit("tool_state", {"call_id": call.call_id, "state": "error",
                                          "detail": "denied by operator"})
                await self._submit_result(call, result)
                return
        self._emit("tool_state", {"call_id": call.call_id, "name": call.name,
                                  "task": call.task, "state": "dispatched"})
        result = await self.router.route(call)
        self._emit("tool_state", {"call_id": call.call_id, "state": result.status,
                                  "latency_ms": result.latency_ms,
                                  "steps": len(result.steps)})
        await self._submit_result(call, result)

    async def _submit_result(self, call: ToolCall, result: ToolResult) -> None:
        self.tracker.on_tool_result(call, result)
        frame = format_result(result)
        msg = self.core.tool_result_message(result, frame.payload)
        await self._send(msg)

    def resolve_approval(self, call_id: str, verdict: str) -> bool:
        future = self._approvals.get(call_id)
        if future is None or future.done():
            return False
        future.set_result(verdict)
        return True

    # -- control commands ----------------------------------------------------------

    async def _control_consumer(self) -> None:
        assert self.hub is not None
        while True:
            cmd = await self.hub.commands.get()
            try:
                await self._apply_command(cmd)
            except Exception as exc:
                logger.warning("control command failed: %s", exc)
                self._emit("surface", {"code": "control", "message": str(exc)})

    async def _apply_command(self, cmd: dict) -> None:
        name = cmd.get("cmd")
        if name == "utterance":
            await self._send(self.core.user_text_message(str(cmd["text"])))
            self._last_activity = time.monotonic()
        elif name == "frame":
            import base64
            jpeg = base64.b64decode(cmd["jpeg_b64"])
            frame = VideoFrame(jpeg_bytes=jpeg, capture_ts=self._clock_ms(),
                               width=int(cmd.get("width", 0)) or 1,
                               height=int(cmd.get("height", 0)) or 1)
            await self._send_frame(frame)
        elif name == "mode":
            mode = MediaMode(cmd["value"])
            if hasattr(self, "_pipeline"):
                self._pipeline.set_mode(mode)
            self.opts.mode = mode
            self._emit("media", {"mode": mode.value})
        elif name == "approval":
            ok = self.resolve_approval(str(cmd["call_id"]), str(cmd["verdict"]))
            if not ok:
                self._emit("surface", {"code": "approval",
                                       "message": f"no pending approval for {cmd['call_id']}"})

    # -- main loop --------------------------------------------------------------

    async def run(self) -> RunSummary:
        self._started_monotonic = time.monotonic()
        started_wall = int(time.time() * 1000)
        if self.opts.capture_path is not None:
            from .wire import CaptureWriter
            self._capture = CaptureWriter(self.opts.capture_path)
        control_task = None
        control_ready = asyncio.Event()
        if self.hub is not None:
            control_task = asyncio.create_task(serve_control(
                self.hub, self.opts.control_host, self.opts.control_port, control_ready))
            await control_ready.wait()
            self._emit("hello", {"session_id": self.session_id,
                                 "endpoint": self.cfg.endpoint})
        try:
            async with ToolRouter(self.router_cfg) as router:
                self.router = router
                await self._connect_with_retries()
                await self._handshake()
                receiver = asyncio.create_task(self._receiver())
                sender = asyncio.create_task(self._sender())
                consumer = (asyncio.create_task(self._control_consumer())
                            if self.hub is not None else None)
                self._last_activity = time.monotonic()
                try:
                    await self._wait_for_completion(sender)
                finally:
                    for task in [sender, receiver, consumer, self._drainer,
                                 *self._tool_tasks]:
                        if task is not None and not task.done():
                            task.cancel()
                    await self._ws.close()
                self.core.close()
        finally:
            if control_task is not None:
                control_task.cancel()
            if self._capture is not None:
                self._capture.close()
            self._write_logs(started_wall)
        self.summary.phase = self.core.phase.value
        self.summary.turns = self._turns_done
        self.summary.interactions = self.tracker.done
        self.summary.reconnects = self.core.stats.reconnects
        return self.summary

    async def _wait_for_completion(self, sender: asyncio.Task) -> None:
        deadline = time.monotonic() + self.opts.max_run_s
        while time.monotonic() < deadline:
            await asyncio.sleep(0.02)
            if self.opts.expected_turns is not None:
                if self._turns_done >= self.opts.expected_turns and not self.core.pending_calls:
                    return
                continue
            if not sender.done():
                continue
            if self.core.pending_calls or self._tool_tasks:
                continue
            if self.hub is not None and not self.hub.commands.empty():
                continue
            if time.monotonic() - self._last_activity >= self.opts.quiet_close_s:
                return
        logger.warning("session hit max_run_s=%.1f, closing", self.opts.max_run_s)

    def _write_logs(self, started_wall: int) -> None:
        if self.opts.log_dir is None:
            return
        log = InteractionLog(self.opts.log_dir)
        for record in self.tracker.done:
            log.log_interaction(record)
        duration = max(int(time.time() * 1000) - started_wall, 1)
        log.log_session(SessionRecord(session_id=self.session_id, participant="operator",
                                      interaction_ids=[r.id for r in self.tracker.done],
                                      duration_ms=duration))


async def replay_capture(path: str | Path, cfg: SessionConfig | None = None) -> dict:
    """Re-drive a recorded frame log through the client state machine.

    Outgoing frames are checked for seq continuity; incoming frames go through
    the demux. Returns a report with any invariant violations.
    """
    from .wire import read_capture

    core = SessionCore(cfg or SessionConfig())
    violations: list[str] = []
    out_seq = -1
    effects = 0
    lines = 0
    for line in read_capture(path):
        lines += 1
        if line.direction == "out":
            if line.msg.seq != out_seq + 1:
                violations.append(f"line {lines}: client seq gap ({line.msg.seq} "
                                  f"after {out_seq})")
            out_seq = line.msg.seq
            if line.msg.kind == wire.KIND_SETUP:
                if core.phase is not Phase.CONNECTING:
                    violations.append(f"line {lines}: setup while {core.phase.value}")
            elif line.msg.kind == wire.KIND_TOOL_RESULT:
                core.pending_calls.discard(line.msg.payload.get("call_id", ""))
                if not core.pending_calls and core.phase is Phase.AWAITING_TOOL:
                    core.phase = Phase.STREAMING
            elif line.msg.kind in (wire.KIND_AUDIO_IN, wire.KIND_FRAME_IN):
                if core.phase is Phase.CONNECTING:
                    core.phase = Phase.STREAMING  # capture starts mid-handshake
                elif core.phase is Phase.READY:
                    core.phase = Phase.STREAMING
        else:
            if core.phase is Phase.CONNECTING and line.msg.kind == wire.KIND_TURN_COMPLETE:
                core.mark_ready()
                continue
            effects += len(core.handle_incoming(line.msg))
        violations.extend(f"line {lines}: {p}" for p in core.check_invariants())
    core.close()
    return {"lines": lines, "effects": effects, "violations": violations,
            "terminal_phase": core.phase.value,
            "transcript_entries": len(core.transcript.entries)}
