"""Dispatches tool calls to the skill gateway and tracks them in flight.

Every routed call produces exactly one ToolResult, even when the gateway
reply races the deadline: whichever side resolves first wins and the loser
is discarded with a log line. Timeouts do not cancel the underlying HTTP
request, mirroring a gateway that keeps working after the caller gave up.
"""
from __future__ import annotations

import asyncio
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable

import httpx

from . import wire
from .tools import STATUS_ERROR, STATUS_OK, STATUS_TIMEOUT, StepRecord, ToolCall, ToolResult

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "AGENTLOOP_TOKEN"
SUMMARY_LIMIT_BYTES = 8 * 1024


@dataclass
class RouterConfig:
    gateway_url: str = "http://127.0.0.1:18789"
    bearer_token: str = "local-dev-token"
    timeout_ms: int = 120_000
    max_inflight: int = 8

    def __post_init__(self) -> None:
        env_token = os.environ.get(TOKEN_ENV_VAR)
        if env_token:
            self.bearer_token = env_token
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if not self.bearer_token:
            raise ValueError("bearer_token must be non-empty")


@dataclass
class _Inflight:
    deadline_ms: float
    delivered: bool = False


@dataclass
class RouterStats:
    dispatched: int = 0
    ok: int = 0
    errors: int = 0
    timeouts: int = 0
    saturated: int = 0
    late_replies_discarded: int = 0


class ToolRouter:
    """Shared-state async dispatcher; the inflight table is the critical section."""

    def __init__(self, cfg: RouterConfig | None = None,
                 client: httpx.AsyncClient | None = None,
                 context_provider: Callable[[], dict[str, Any]] | None = None):
        self.cfg = cfg or RouterConfig()
        self._client = client
        self._own_client = client is None
        self._table: dict[str, _Inflight] = {}
        self._lock = asyncio.Lock()
        self.stats = RouterStats()
        self._context_provider = context_provider

    async def __aenter__(self) -> "ToolRouter":
        if self._client is None:
            self._client = httpx.AsyncClient(timeout=None)
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.close()

    async def close(self) -> None:
        if self._own_client and self._client is not None:
            await self._client.aclose()
            self._client = None

    @property
    def inflight(self) -> int:
        return len(self._table)

    async def route(self, call: ToolCall,
                    on_result: Callable[[ToolResult], Awaitable[None] | None] | None = None) -> ToolResult:
        """Dispatch one call and return its single ToolResult."""
        started = time.monotonic()
        async with self._lock:
            if len(self._table) >= self.cfg.max_inflight:
                self.stats.saturated += 1
                result = ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                                    summary="router saturated: too many calls in flight")
                return await self._emit(result, on_result)
            self._table[call.call_id] = _Inflight(
                deadline_ms=started * 1000 + self.cfg.timeout_ms)
            self.stats.dispatched += 1

        request_task = asyncio.create_task(self._post(call))
        timeout_s = self.cfg.timeout_ms / 1000
        done, _ = await asyncio.wait({request_task}, timeout=timeout_s)

        if request_task in done:
            result = request_task.result()
            result.latency_ms = int((time.monotonic() - started) * 1000)
            winner = await self._deliver(call.call_id, result)
        else:
            timeout_result = ToolResult(
                call_id=call.call_id, status=STATUS_TIMEOUT,
                summary=f"no reply from gateway within the {self.cfg.timeout_ms} ms deadline",
                latency_ms=self.cfg.timeout_ms)
            winner = await self._deliver(call.call_id, timeout_result)
            # Let the straggler resolve in the background; its reply is logged
            # and dropped by the delivered flag.
            request_task.add_done_callback(
                lambda t: asyncio.ensure_future(self._discard_late(call.call_id, t)))
        return await self._emit(winner, on_result)

    async def _deliver(self, call_id: str, result: ToolResult) -> ToolResult:
        async with self._lock:
            entry = self._table.get(call_id)
            if entry is None or entry.delivered:
                # Should not happen for the first deliverer; defensive.
                self.stats.late_replies_discarded += 1
                logger.warning("duplicate delivery suppressed for %s", call_id)
                return result
            entry.delivered = True
            del self._table[call_id]
        if result.status == STATUS_OK:
            self.stats.ok += 1
        elif result.status == STATUS_TIMEOUT:
            self.stats.timeouts += 1
        else:
            self.stats.errors += 1
        return result

    async def _discard_late(self, call_id: str, task: asyncio.Task) -> None:
        exc = task.exception()
        async with self._lock:
            self.stats.late_replies_discarded += 1
        if exc is not None:
            logger.info("late gateway failure for %s discarded: %s", call_id, exc)
        else:
            logger.info("late gateway reply for %s discarded (deadline already fired)", call_id)

    async def _emit(self, result: ToolResult,
                    on_result: Callable[[ToolResult], Awaitable[None] | None] | None) -> ToolResult:
        if on_result is not None:
            maybe = on_result(result)
            if asyncio.iscoroutine(maybe):
                await maybe
        return result

    async def _post(self, call: ToolCall) -> ToolResult:
        assert self._client is not None, "use ToolRouter as an async context manager"
        body = {"call_id": call.call_id, "task": call.task}
        if self._context_provider is not None:
            body["context"] = self._context_provider()
        try:
            resp = await self._client.post(
                f"{self.cfg.gateway_url.rstrip('/')}/execute",
                json=body,
                headers={"Authorization": f"Bearer {self.cfg.bearer_token}"})
        except httpx.HTTPError as exc:
            return ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                              summary=f"gateway unreachable: {exc.__class__.__name__}: {exc}")
        if resp.status_code == 401:
            return ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                              summary="gateway rejected credentials (401)")
        if resp.status_code == 422:
            return ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                              summary=f"gateway rejected request (422): {resp.text[:200]}")
        if resp.status_code != 200:
            return ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                              summary=f"gateway returned HTTP {resp.status_code}")
        try:
            obj = resp.json()
            steps = [StepRecord.from_dict(s) for s in obj.get("steps", [])]
            status = obj.get("status", STATUS_ERROR)
            if status not in (STATUS_OK, STATUS_ERROR):
                status = STATUS_ERROR
            return ToolResult(call_id=call.call_id, status=status,
                              summary=str(obj.get("summary", "")), steps=steps)
        except (ValueError, KeyError, TypeError) as exc:
            return ToolResult(call_id=call.call_id, status=STATUS_ERROR,
                              summary=f"gateway reply unparseable: {exc}")


def format_result(result: ToolResult) -> wire.LiveMessage:
    """Build the tool_result wire frame: summary plus step tallies, never raw steps."""
    summary = result.summary
    truncated = False
    if len(summary.encode("utf-8")) > SUMMARY_LIMIT_BYTES:
        encoded = summary.encode("utf-8")[:SUMMARY_LIMIT_BYTES]
        summary = encoded.decode("utf-8", errors="ignore") + "…"
        truncated = True
    kinds = result.step_kind_counts()
    if kinds:
        tally = ", ".join(f"{k}x{n}" for k, n in sorted(kinds.items()))
        summary = f"{summary} [{len(result.steps)} steps: {tally}]"
    payload: dict[str, Any] = {
        "call_id": result.call_id,
        "status": result.status,
        "result": summary,
        "step_count": len(result.steps),
    }
    if truncated:
        payload["truncated"] = True
    # seq is assigned by the session when the frame is sent.
    return wire.LiveMessage(wire.KIND_TOOL_RESULT, 0, payload)
