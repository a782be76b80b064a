"""Deployment-style statistics over interaction logs.

Conventions, fixed here so numbers are reproducible:
  - medians use the lower-median on sorted values (even n -> lower middle)
  - latency is first_response_at - started_at, only for responded records
  - chain depth is the total step count across an interaction's tool calls
  - a "browser" interaction contains at least one browser step; "voice-only"
    has no tool calls at all; everything else with tools is "non-browser"
  - time-of-day buckets cut the record's UTC hour at 5/12/17/22
  - a data source is an entry in the record's data_sources set
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from ..tools import STEP_KINDS
from .records import CATEGORIES, InteractionLog, InteractionRecord, SessionRecord

DEPTH_BUCKETS = ("0", "1", "2-3", "4+")
DAY_PARTS = ("morning", "afternoon", "evening", "night")


def lower_median(values: list[float]) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    n = len(ordered)
    return ordered[(n - 1) // 2] if n % 2 else ordered[n // 2 - 1]


def round_half_up(value: float, digits: int = 1) -> float:
    quant = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quant, rounding=ROUND_HALF_UP))


def _depth_bucket(depth: int) -> str:
    if depth == 0:
        return "0"
    if depth == 1:
        return "1"
    if depth <= 3:
        return "2-3"
    return "4+"


def _day_part(started_at_ms: int) -> str:
    hour = datetime.fromtimestamp(started_at_ms / 1000, tz=timezone.utc).hour
    if 5 <= hour < 12:
        return "morning"
    if 12 <= hour < 17:
        return "afternoon"
    if 17 <= hour < 22:
        return "evening"
    return "night"


@dataclass
class StatsReport:
    empty: bool = True
    malformed_lines: int = 0
    total_interactions: int = 0
    sessions: int = 0
    participants: int = 0
    active_participant_days: int = 0
    interactions_per_day_mean: float = 0.0
    mean_active_days_per_participant: float = 0.0
    total_hours: float = 0.0
    tool_executions_per_command_mean: float = 0.0
    total_steps: int = 0
    step_kind_distribution: dict[str, float] = field(default_factory=dict)
    camera_fraction: float = 0.0
    latency_median_s: float = 0.0
    latency_median_non_browser_s: float = 0.0
    latency_median_browser_s: float = 0.0
    latency_median_voice_only_s: float = 0.0
    chain_depth_fractions: dict[str, float] = field(default_factory=dict)
    chain_depth_counts: dict[str, int] = field(default_factory=dict)
    max_chain_depth: int = 0
    multi_source_fraction: float = 0.0
    no_response_fraction: float = 0.0
    time_of_day_fractions: dict[str, float] = field(default_factory=dict)
    time_of_day_counts: dict[str, int] = field(default_factory=dict)
    session_duration_median_min: float = 0.0
    category_fractions: dict[str, float] = field(default_factory=dict)
    category_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "StatsReport":
        return cls(**obj)


def compute_stats(interactions: list[InteractionRecord], sessions: list[SessionRecord],
                  malformed: int = 0) -> StatsReport:
    report = StatsReport(malformed_lines=malformed)
    if not interactions:
        return report
    report.empty = False
    n = len(interactions)
    report.total_interactions = n
    report.sessions = len(sessions)

    by_session = {s.session_id: s for s in sessions}
    participants = {s.participant for s in sessions}
    report.participants = len(participants)
    active_days = set()
    for rec in interactions:
        session = by_session.get(rec.session_id)
        participant = session.participant if session else "unknown"
        day = datetime.fromtimestamp(rec.started_at / 1000, tz=timezone.utc).date()
        active_days.add((participant, day))
    report.active_participant_days = len(active_days)
    if active_days:
        report.interactions_per_day_mean = n / len(active_days)
    if participants:
        per_participant_days = {}
        for participant, _day in active_days:
            per_participant_days[participant] = per_participant_days.get(participant, 0) + 1
        report.mean_active_days_per_participant = (
            sum(per_participant_days.values()) / len(participants))
    report.total_hours = sum(s.duration_ms for s in sessions) / 3_600_000

    # Steps and chain depth
    step_counts: dict[str, int] = {k: 0 for k in STEP_KINDS}
    depth_counts = {b: 0 for b in DEPTH_BUCKETS}
    total_steps = 0
    for rec in interactions:
        depth = rec.chain_depth
        total_steps += depth
        depth_counts[_depth_bucket(depth)] += 1
        report.max_chain_depth = max(report.max_chain_depth, depth)
        for call in rec.tool_calls:
            for step in call.steps:
                step_counts[step.step_kind] += 1
    report.total_steps = total_steps
    report.tool_executions_per_command_mean = total_steps / n
    if total_steps:
        report.step_kind_distribution = {k: step_counts[k] / total_steps for k in STEP_KINDS}
    report.chain_depth_counts = depth_counts
    report.chain_depth_fractions = {b: depth_counts[b] / n for b in DEPTH_BUCKETS}

    report.camera_fraction = sum(1 for r in interactions if r.used_camera) / n
    report.multi_source_fraction = sum(1 for r in interactions if len(r.data_sources) >= 2) / n
    report.no_response_fraction = sum(1 for r in interactions if not r.responded) / n

    # Latency groups
    overall, non_browser, browser, voice_only = [], [], [], []
    for rec in interactions:
        latency = rec.latency_ms
        if latency is None:
            continue
        overall.append(latency)
        if not rec.tool_calls:
            voice_only.append(latency)
        elif any(step.step_kind == "browser" for call in rec.tool_calls for step in call.steps):
            browser.append(latency)
        else:
            non_browser.append(latency)
    report.latency_median_s = lower_median(overall) / 1000
    report.latency_median_non_browser_s = lower_median(non_browser) / 1000
    report.latency_median_browser_s = lower_median(browser) / 1000
    report.latency_median_voice_only_s = lower_median(voice_only) / 1000

    tod_counts = {p: 0 for p in DAY_PARTS}
    for rec in interactions:
        tod_counts[_day_part(rec.started_at)] += 1
    report.time_of_day_counts = tod_counts
    report.time_of_day_fractions = {p: tod_counts[p] / n for p in DAY_PARTS}

    report.session_duration_median_min = lower_median(
        [s.duration_ms for s in sessions]) / 60_000

    cat_counts = {c: 0 for c in CATEGORIES}
    for rec in interactions:
        cat_counts[rec.category] += 1
    report.category_counts = cat_counts
    report.category_fractions = {c: cat_counts[c] / n for c in CATEGORIES}
    return report


def compute_stats_from_dir(log_dir: str | Path) -> StatsReport:
    log = InteractionLog(log_dir)
    interactions, bad_i = log.read_interactions()
    sessions, bad_s = log.read_sessions()
    return compute_stats(interactions, sessions, malformed=bad_i + bad_s)


def render_report(report: StatsReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r} (expected json or table)")

    def pct(x: float) -> str:
        return f"{round_half_up(100 * x, 1):.1f}%"

    def sec(x: float) -> str:
        return f"{round_half_up(x, 1):.1f}s"

    rows: list[tuple[str, str]] = []
    if report.empty:
        rows.append(("log", "empty (no interactions)"))
    rows += [
        ("interactions", str(report.total_interactions)),
        ("sessions", str(report.sessions)),
        ("participants", str(report.participants)),
        ("active participant-days", str(report.active_participant_days)),
        ("interactions/day (mean)", f"{round_half_up(report.interactions_per_day_mean, 1):.1f}"),
        ("active days/participant (mean)",
         f"{round_half_up(report.mean_active_days_per_participant, 1):.1f}"),
        ("total interaction hours", f"{round_half_up(report.total_hours, 1):.1f}"),
        ("tool executions/command (mean)",
         f"{round_half_up(report.tool_executions_per_command_mean, 1):.1f}"),
        ("step kinds", "  ".join(f"{k} {pct(v)}" for k, v in
                                 report.step_kind_distribution.items())),
        ("camera-grounded", pct(report.camera_fraction)),
        ("latency median (overall)", sec(report.latency_median_s)),
        ("latency median (non-browser)", sec(report.latency_median_non_browser_s)),
        ("latency median (browser)", sec(report.latency_median_browser_s)),
        ("latency median (voice-only)", sec(report.latency_median_voice_only_s)),
        ("chain depth", "  ".join(f"{b}: {pct(report.chain_depth_fractions.get(b, 0.0))}"
                                  for b in DEPTH_BUCKETS)),
        ("max chain depth", str(report.max_chain_depth)),
        ("multi-source", pct(report.multi_source_fraction)),
        ("no response", pct(report.no_response_fraction)),
        ("time of day (5/12/17/22 cuts)",
         "  ".join(f"{p} {pct(report.time_of_day_fractions.get(p, 0.0))}" for p in DAY_PARTS)),
        ("session duration median (min)",
         f"{round_half_up(report.session_duration_median_min, 1):.1f}"),
        ("categories", "  ".join(f"{c} {pct(report.category_fractions.get(c, 0.0))}"
                                 for c in CATEGORIES)),
    ]
    if report.malformed_lines:
        rows.append(("malformed lines skipped", str(report.malformed_lines)))
    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)
