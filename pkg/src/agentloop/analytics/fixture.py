"""Synthetic deployment log whose statistics hit fixed headline targets.

The real field logs behind the headline usage numbers are private, so tests
run against this constructed stand-in: a 555-interaction, 118-session log
built so that compute_stats lands exactly on the published aggregates
(category split, chain-depth buckets, latency medians, camera fraction,
time-of-day mix, session median, and so on). Counts were solved by hand:

  categories   78/166/89/66/105/51      -> 14/30/16/12/19/9 %
  chain depth  117/150/127/161          -> 21/27/23/29 %
  steps        1776 total               -> 3.2 per command
  step kinds   568/551/213/213/53/178   -> 32/31/12/12/3/10 %
  camera 216, multi-source 161, no-response 11, time-of-day 144/244/150/17

Latency values are placed explicitly around the target lower-medians
(8.4 s voice-only, 13.4 s non-browser, 15.5 s browser, 12.2 s overall).
Generation is fully deterministic (fixed RNG seed) and verify_targets()
re-derives every number before anything is written.
"""
from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..tools import StepRecord
from .records import (InteractionLog, InteractionRecord, SessionRecord, ToolCallRecord,
                      categorize)
from .stats import StatsReport, compute_stats, round_half_up

SEED = 20260313

PARTICIPANT_DAYS = {"p1": 19, "p2": 17, "p3": 14, "p4": 5}
FIRST_DAY = datetime(2026, 2, 2, tzinfo=timezone.utc)

CATEGORY_COUNTS = {"communicate": 78, "retrieve": 166, "save": 89,
                   "recall": 66, "shop": 105, "control": 51}

# (depth, lane) -> count; lane V has no tools, NB tools but no browser steps,
# B at least one browser step.
DEPTH_PLAN = [
    (0, "V", 117),
    (1, "NB", 150),
    (2, "NB", 30), (2, "B", 34),
    (3, "NB", 21), (3, "B", 42),
    (8, "B", 158), (9, "B", 2), (27, "B", 1),
]

STEP_KIND_TOTALS = {"shell": 568, "browser": 551, "file_io": 213,
                    "web_search": 213, "memory": 53, "message": 178}

# Session plan: 30 morning / 52 afternoon / 32 evening / 4 night sessions,
# interaction targets 144/244/150/17 per day-part.
BUCKET_SESSIONS = [("morning", 30), ("afternoon", 52), ("evening", 32), ("night", 4)]
BUCKET_INTERACTIONS = {"morning": 144, "afternoon": 244, "evening": 150, "night": 17}
BUCKET_START_MINUTES = {"morning": 8 * 60, "afternoon": 13 * 60,
                        "evening": 18 * 60, "night": 22 * 60 + 30}

SLOT_OFFSET_MS = 30_000
SLOT_SPACING_MS = 70_000

UTTERANCES = {
    "communicate": [
        "archive everything in my inbox except Sara's email",
        "send a message to the lab channel that I'm running late",
        "reply to Daniel that the demo is confirmed",
        "draft an email to the first author of this paper",
        "post this photo to the team channel",
        "send mom a text that dinner is at seven",
    ],
    "retrieve": [
        "what is this line for",
        "how long is the ferry wait right now",
        "what's the weather this afternoon",
        "tell me about the person I'm meeting next",
        "which bus goes downtown from here",
        "how do I open this rice cooker lid",
        "what's playing at the cinema tonight",
    ],
    "save": [
        "save this receipt for my records",
        "remember that the wifi password is on the welcome sheet",
        "note down the room number for tomorrow",
        "save this conversation for later",
        "capture this slide before it changes",
    ],
    "recall": [
        "what did I eat this week",
        "when did I come here last time",
        "what did we decide about the trip earlier",
        "what did I work on yesterday",
        "what happened with the travel planning task",
    ],
    "shop": [
        "add eggs to my shopping list",
        "check the price of these earbuds",
        "add this book to my cart if the rating is above 4.5",
        "order more paper towels",
        "compare prices for this yogurt",
    ],
    "control": [
        "turn off the light",
        "turn on the thermostat",
        "organize the scan folder",
        "upload the recording to the backup folder",
        "download the meeting summary file",
    ],
}

CATEGORY_SOURCE = {"communicate": "email", "retrieve": "web", "save": "files",
                   "recall": "memory", "shop": "web", "control": "device"}


def _latency_values() -> dict[str, list[int | None]]:
    """Per-lane latency multisets with the medians pinned by construction."""
    voice: list[int | None] = (
        [5000 + i * 60 for i in range(52)] + [8400] + [8450 + i * 10 for i in range(53)])
    voice += [None] * 11  # the no-response interactions
    non_browser = ([9500 + i * 41 for i in range(65)] + [12250 + i * 31 for i in range(35)]
                   + [13400] + [13450 + i * 120 for i in range(100)])
    browser = ([10000 + i * 21 for i in range(100)] + [12200]
               + [12400 + i * 180 for i in range(17)] + [15500]
               + [15600 + i * 370 for i in range(118)])
    return {"V": voice, "NB": [int(v) for v in non_browser], "B": [int(v) for v in browser]}


def _session_durations() -> list[int]:
    """118 durations: lower-median exactly 16.0 min, total exactly 25.8 h."""
    shorts = [180_000 + i * 4_000 for i in range(58)]
    longs = [970_000 + i * 9_000 for i in range(58)]
    rest = 92_880_000 - sum(shorts) - 960_000 - sum(longs)
    durations = shorts + [960_000] + longs + [rest]
    assert rest > max(longs), "balancing duration must stay above the median"
    assert sum(durations) == 92_880_000
    return durations


def _build_days() -> list[tuple[str, datetime]]:
    days = []
    for offset, (participant, count) in enumerate(PARTICIPANT_DAYS.items()):
        start = FIRST_DAY + timedelta(days=offset)
        days.extend((participant, start + timedelta(days=i)) for i in range(count))
    return days


def _capacity(duration_ms: int) -> int:
    usable = duration_ms - SLOT_OFFSET_MS - 62_100
    return max(1, usable // SLOT_SPACING_MS + 1)


def generate_records() -> tuple[list[InteractionRecord], list[SessionRecord]]:
    rng = random.Random(SEED)
    days = _build_days()

    # --- sessions: bucket, day, start time, duration --------------------------
    buckets: list[str] = []
    for bucket, count in BUCKET_SESSIONS:
        buckets.extend([bucket] * count)
    durations = _session_durations()
    ordered_durations: list[int] = [0] * 118
    # Night needs several interactions per session, so it takes the four
    # longest durations; everything else alternates short/long.
    night_slots = [i for i, b in enumerate(buckets) if b == "night"]
    longs_sorted = sorted(range(118), key=lambda i: durations[i])
    big_four = longs_sorted[-4:]
    for slot, dur_idx in zip(night_slots, big_four):
        ordered_durations[slot] = durations[dur_idx]
    remaining = [durations[i] for i in longs_sorted[:-4]]
    shorts = remaining[: len(remaining) // 2]
    talls = remaining[len(remaining) // 2:]
    interleaved: list[int] = []
    for a, b in zip(shorts, talls):
        interleaved += [a, b]
    interleaved += shorts[len(talls):] + talls[len(shorts):]
    queue = iter(interleaved)
    for i in range(118):
        if ordered_durations[i] == 0:
            ordered_durations[i] = next(queue)

    sessions: list[SessionRecord] = []
    session_meta: list[dict] = []
    for i in range(118):
        participant, day = days[i % len(days)]
        start_min = BUCKET_START_MINUTES[buckets[i]]
        start = day + timedelta(minutes=start_min)
        sessions.append(SessionRecord(session_id=f"s{i:03d}", participant=participant,
                                      duration_ms=ordered_durations[i]))
        session_meta.append({"bucket": buckets[i], "start_ms": int(start.timestamp() * 1000),
                             "count": 0, "capacity": _capacity(ordered_durations[i])})

    # Fill per-bucket interaction counts round-robin up to capacity.
    for bucket, target in BUCKET_INTERACTIONS.items():
        members = [i for i in range(118) if buckets[i] == bucket]
        placed = 0
        while placed < target:
            progressed = False
            for i in members:
                if placed >= target:
                    break
                if session_meta[i]["count"] < session_meta[i]["capacity"]:
                    session_meta[i]["count"] += 1
                    placed += 1
                    progressed = True
            if not progressed:
                raise AssertionError(f"not enough session capacity in {bucket}")
    assert sum(m["count"] for m in session_meta) == 555
    assert all(m["count"] >= 1 for m in session_meta), "every session needs an interaction"

    # --- per-interaction attribute decks --------------------------------------
    profile_deck: list[tuple[int, str]] = []
    for depth, lane, count in DEPTH_PLAN:
        profile_deck.extend([(depth, lane)] * count)
    rng.shuffle(profile_deck)

    category_deck: list[str] = []
    for category, count in CATEGORY_COUNTS.items():
        category_deck.extend([category] * count)
    rng.shuffle(category_deck)

    latencies = _latency_values()
    for lane in latencies:
        rng.shuffle(latencies[lane])
    lane_iters = {lane: iter(values) for lane, values in latencies.items()}

    nonbrowser_pool: list[str] = []
    for kind, count in STEP_KIND_TOTALS.items():
        if kind != "browser":
            nonbrowser_pool.extend([kind] * count)
    rng.shuffle(nonbrowser_pool)
    pool_iter = iter(nonbrowser_pool)

    # Spread the 314 extra browser steps over the B interactions that have room.
    b_indices = [i for i, (depth, lane) in enumerate(profile_deck) if lane == "B"]
    extra_browser = {i: 0 for i in b_indices}
    remaining_extra = STEP_KIND_TOTALS["browser"] - len(b_indices)
    while remaining_extra > 0:
        progressed = False
        for i in b_indices:
            if remaining_extra == 0:
                break
            depth = profile_deck[i][0]
            if 1 + extra_browser[i] < depth:
                extra_browser[i] += 1
                remaining_extra -= 1
                progressed = True
        if not progressed:
            raise AssertionError("cannot place all browser steps")

    retrieve_camera_budget = 216 - CATEGORY_COUNTS["shop"] - CATEGORY_COUNTS["save"]

    # --- assemble records in session order -------------------------------------
    interactions: list[InteractionRecord] = []
    zero_depth_seen = 0
    total_zero = sum(c for d, _l, c in DEPTH_PLAN if d == 0)
    slot_index = 0
    for i in range(118):
        meta = session_meta[i]
        for j in range(meta["count"]):
            depth, lane = profile_deck[slot_index]
            category = category_deck[slot_index]
            started = meta["start_ms"] + SLOT_OFFSET_MS + j * SLOT_SPACING_MS
            latency = next(lane_iters[lane])
            utterance_pool = UTTERANCES[category]
            utterance = utterance_pool[slot_index % len(utterance_pool)]

            used_camera = category in ("shop", "save")
            if category == "retrieve" and retrieve_camera_budget > 0:
                used_camera = True
                retrieve_camera_budget -= 1

            responded = True
            first_response = completed = None
            if depth == 0:
                zero_depth_seen += 1
                if latency is None:
                    responded = False
                else:
                    first_response = started + latency
                    completed = first_response + 500
            else:
                assert latency is not None
                first_response = started + latency
                completed = first_response + 500 + 100 * depth

            tool_calls: list[ToolCallRecord] = []
            if depth > 0:
                kinds: list[str] = []
                if lane == "B":
                    kinds.extend(["browser"] * (1 + extra_browser[slot_index]))
                while len(kinds) < depth:
                    kinds.append(next(pool_iter))
                steps = [StepRecord(step_kind=k, detail=f"simulated {k} action",
                                    duration_ms=rng.randrange(120, 2800))
                         for k in kinds]
                tool_calls = [ToolCallRecord(name="execute", steps=steps)]

            sources = {CATEGORY_SOURCE[category]}
            if depth >= 4:
                sources.add("memory" if CATEGORY_SOURCE[category] != "memory" else "web")

            record = InteractionRecord(
                id=f"i{slot_index:04d}", session_id=sessions[i].session_id,
                started_at=started, first_response_at=first_response,
                completed_at=completed, utterance=utterance, used_camera=used_camera,
                tool_calls=tool_calls, category=category, data_sources=sources,
                responded=responded)
            sessions[i].interaction_ids.append(record.id)
            interactions.append(record)
            slot_index += 1
    assert slot_index == 555
    assert zero_depth_seen == total_zero
    for lane, it in lane_iters.items():
        assert next(it, None) is None, f"unused latency values in lane {lane}"
    assert next(pool_iter, None) is None, "unused step kinds"
    return interactions, sessions


# Printed headline targets: value, precision in decimal digits.
TARGETS = {
    "total_interactions": (555, None),
    "sessions": (118, None),
    "participants": (4, None),
    "active_participant_days": (55, None),
    "interactions_per_day_mean": (10.1, 1),
    "mean_active_days_per_participant": (13.8, 1),
    "total_hours": (25.8, 1),
    "tool_executions_per_command_mean": (3.2, 1),
    "camera_fraction": (39, "pct"),
    "multi_source_fraction": (29, "pct"),
    "no_response_fraction": (2, "pct"),
    "latency_median_s": (12.2, 1),
    "latency_median_non_browser_s": (13.4, 1),
    "latency_median_browser_s": (15.5, 1),
    "latency_median_voice_only_s": (8.4, 1),
    "session_duration_median_min": (16.0, 1),
    "max_chain_depth": (27, None),
}
CATEGORY_PCTS = {"communicate": 14, "retrieve": 30, "save": 16,
                 "recall": 12, "shop": 19, "control": 9}
DEPTH_PCTS = {"0": 21, "1": 27, "2-3": 23, "4+": 29}
TOD_PCTS = {"morning": 26, "afternoon": 44, "evening": 27, "night": 3}
STEP_PCTS = {"shell": 32, "browser": 31, "file_io": 12, "web_search": 12,
             "memory": 3, "message": 10}


def verify_targets(report: StatsReport) -> list[str]:
    """Return a list of mismatches between the report and the headline targets."""
    problems = []

    def check(name: str, got, want) -> None:
        if got != want:
            problems.append(f"{name}: got {got}, want {want}")

    for field_name, (want, precision) in TARGETS.items():
        value = getattr(report, field_name)
        if precision == "pct":
            check(field_name, round_half_up(100 * value, 0), float(want))
        elif precision is None:
            check(field_name, value, want)
        else:
            check(field_name, round_half_up(value, precision), want)
    for cat, want in CATEGORY_PCTS.items():
        check(f"category {cat}", round_half_up(100 * report.category_fractions[cat], 0), float(want))
    for bucket, want in DEPTH_PCTS.items():
        check(f"depth {bucket}", round_half_up(100 * report.chain_depth_fractions[bucket], 0),
              float(want))
    for part, want in TOD_PCTS.items():
        check(f"time-of-day {part}", round_half_up(100 * report.time_of_day_fractions[part], 0),
              float(want))
    for kind, want in STEP_PCTS.items():
        check(f"step kind {kind}", round_half_up(100 * report.step_kind_distribution[kind], 0),
              float(want))
    return problems


def generate_fixture(out_dir: str | Path) -> StatsReport:
    """Write interactions.jsonl + sessions.jsonl; refuses to emit off-target data."""
    interactions, sessions = generate_records()
    for record in interactions:
        if categorize(record.utterance) != record.category:
            raise AssertionError(f"utterance {record.utterance!r} classifies as "
                                 f"{categorize(record.utterance)!r}, "
                                 f"labelled {record.category!r}")
    report = compute_stats(interactions, sessions)
    problems = verify_targets(report)
    if problems:
        raise AssertionError("fixture misses targets:\n  " + "\n  ".join(problems))
    log = InteractionLog(out_dir)
    log.interactions_path.unlink(missing_ok=True)
    log.sessions_path.unlink(missing_ok=True)
    for record in interactions:
        log.log_interaction(record)
    for session in sessions:
        log.log_session(session)
    return report
