"""Shared tool-call vocabulary crossing the session/router/gateway boundary."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

# Closed set of execution step kinds; analytics buckets join on these directly.
STEP_KINDS = ("shell", "browser", "file_io", "web_search", "memory", "message")

STATUS_OK = "ok"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"

_NAME_RE = re.compile(r"^[a-z_]+$")


class ToolCallError(ValueError):
    pass


@dataclass
class StepRecord:
    step_kind: str
    detail: str
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.step_kind not in STEP_KINDS:
            raise ToolCallError(f"unknown step kind {self.step_kind!r}")
        if self.duration_ms < 0:
            raise ToolCallError("duration_ms must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {"step_kind": self.step_kind, "detail": self.detail, "duration_ms": self.duration_ms}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "StepRecord":
        return cls(step_kind=obj["step_kind"], detail=obj["detail"],
                   duration_ms=int(obj.get("duration_ms", 0)))


@dataclass
class ToolCall:
    call_id: str
    name: str
    args: dict[str, Any]
    issued_at: int = 0  # ms timestamp

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ToolCallError(f"tool name {self.name!r} must match [a-z_]+")
        if self.name == "execute":
            task = self.args.get("task")
            if set(self.args) != {"task"} or not isinstance(task, str) or not task.strip():
                raise ToolCallError("execute takes exactly one non-empty string arg 'task'")

    @property
    def task(self) -> str:
        return str(self.args.get("task", ""))


@dataclass
class ToolResult:
    call_id: str
    status: str
    summary: str
    steps: list[StepRecord] = field(default_factory=list)
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.status not in (STATUS_OK, STATUS_ERROR, STATUS_TIMEOUT):
            raise ToolCallError(f"bad result status {self.status!r}")
        if self.latency_ms < 0:
            raise ToolCallError("latency_ms must be >= 0")

    def step_kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for step in self.steps:
            counts[step.step_kind] = counts.get(step.step_kind, 0) + 1
        return counts
