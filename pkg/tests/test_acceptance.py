"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line so `pytest -s tests/test_acceptance.py` reads as a checklist.
Tolerances are fixed here, not tuned elsewhere.
"""
import asyncio
import json
import random
import time
from pathlib import Path

import numpy as np
import pytest

from agentloop import wire
from agentloop.adapters import synth_voiced_wav
from agentloop.analytics import compute_stats_from_dir, generate_fixture, round_half_up
from agentloop.client import RunnerOptions, SessionRunner, replay_capture
from agentloop.gateway import GatewayApp, GatewayServer, execute
from agentloop.gateway.stores import GatewayState
from agentloop.media import (AudioChunker, FrameThrottle, MediaMode, RawAudio,
                             resample_to_wire)
from agentloop.memory import MemoryEntry, MemoryStore, RetrievalQuery, score
from agentloop.modelsim import start_model_server
from agentloop.router import RouterConfig, ToolRouter
from agentloop.session import SessionConfig
from agentloop.tools import ToolCall
from conftest import TEST_TOKEN, run

REPO = Path(__file__).resolve().parent.parent
NOW_MS = 1_772_452_800_000  # 2026-03-02 12:00 UTC, a Monday


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" - {detail}"
    print(line)
    assert ok, line


class TestSeeAndActLoop:
    def test_end_to_end_cart_loop(self, gateway, tmp_path):
        wav = synth_voiced_wav(tmp_path / "u.wav", voiced_ms=800, trailing_silence_ms=400)
        frames = tmp_path / "frames"
        frames.mkdir()
        from PIL import Image
        Image.fromarray(np.full((48, 64, 3), 90, dtype=np.uint8), "RGB").save(
            frames / "f00.png")
        capture = tmp_path / "capture.jsonl"

        async def go():
            server, port = await start_model_server(script=["add eggs to my shopping list"])
            cfg = SessionConfig(endpoint=f"ws://127.0.0.1:{port}")
            options = RunnerOptions(audio_path=wav, frames_dir=frames,
                                    capture_path=capture, expected_turns=1, max_run_s=15)
            runner = SessionRunner(
                cfg, RouterConfig(gateway_url=gateway.url, bearer_token=TEST_TOKEN), options)
            try:
                return await runner.run()
            finally:
                server.close()
                await server.wait_closed()

        started = time.monotonic()
        summary = run(go())
        elapsed = time.monotonic() - started

        inbound = [l.msg for l in wire.read_capture(capture) if l.direction == "in"]
        outbound = [l.msg for l in wire.read_capture(capture) if l.direction == "out"]
        ack = next((i for i, m in enumerate(inbound)
                    if m.kind == wire.KIND_TRANSCRIPT and m.payload["role"] == "assistant"
                    and m.payload["final"]), None)
        call = next((i for i, m in enumerate(inbound) if m.kind == wire.KIND_TOOL_CALL), None)
        confirm = next((i for i, m in enumerate(inbound[call or 0:], call or 0)
                        if m.kind == wire.KIND_TRANSCRIPT
                        and m.payload["role"] == "assistant"), None) if call is not None else None
        spoken = call is not None and any(m.kind == wire.KIND_AUDIO_OUT
                                          for m in inbound[call:])
        cart = gateway.app.state.cart.read()["items"]
        tool_results = [m for m in outbound if m.kind == wire.KIND_TOOL_RESULT]

        ok = (summary.turns == 1 and ack is not None and call is not None
              and confirm is not None and ack < call < confirm and spoken
              and len(cart) == 1 and len(tool_results) == 1
              and tool_results[0].payload["status"] == "ok" and elapsed < 2.0)
        report("see-and-act loop: ack -> tool_call -> cart mutation -> tool_result "
               "-> spoken confirmation, < 2 s", ok,
               f"{elapsed:.2f}s, ack@{ack} call@{call} confirm@{confirm} cart={len(cart)}")


class TestMediaPipeline:
    def test_media_pipeline_criteria(self):
        rng = np.random.default_rng(0)
        stereo = (rng.standard_normal(48000 * 10 * 2) * 8000).astype(np.int16)
        wire_audio = resample_to_wire(RawAudio(stereo, 48000, 2))
        chunker = AudioChunker()
        chunks = chunker.push(wire_audio)
        chunks_ok = (len(chunks) == 100 and all(len(c.to_bytes()) == 3200 for c in chunks)
                     and chunker.buffered == 0)

        t = np.arange(48000) / 48000
        sine = (0.5 * 32767 * np.sin(2 * np.pi * 440 * t)).astype(np.int16)
        out = resample_to_wire(RawAudio(sine, 48000, 1))
        spectrum = np.abs(np.fft.rfft(out.samples.astype(np.float64)))
        bin_hz = 16000 / len(out.samples)
        sine_ok = abs((int(np.argmax(spectrum[1:])) + 1) * bin_hz - 440.0) <= bin_hz

        throttle = FrameThrottle()
        emitted = sum(throttle.offer(round(i * 1000 / 24)) for i in range(240))
        throttle_ok = abs(emitted - 10) <= 1

        silent = FrameThrottle(mode=MediaMode.AUDIO_ONLY)
        audio_only_ok = not any(silent.offer(round(i * 1000 / 24)) for i in range(240))

        report("media pipeline: 10 s 48 kHz stereo -> 100 x 3200-byte chunks", chunks_ok)
        report("media pipeline: 440 Hz sine survives resampling within 1 DFT bin", sine_ok)
        report("media pipeline: 240-frame 24 fps stream -> 10 +/- 1 frames",
               throttle_ok, f"emitted {emitted}")
        report("media pipeline: audio-only mode emits 0 frames", audio_only_ok)


class TestRouterSemantics:
    def test_exactly_once_and_auth(self, tmp_path):
        import sys
        sys.path.insert(0, str(Path(__file__).parent))
        from test_router import StubGateway

        rng = random.Random(7)
        with StubGateway() as stub:
            async def go():
                cfg = RouterConfig(gateway_url=stub.url, bearer_token=TEST_TOKEN,
                                   timeout_ms=170, max_inflight=32)
                counts = {}
                async with ToolRouter(cfg) as router:
                    gate = asyncio.Semaphore(16)

                    async def one(i):
                        delay = rng.randrange(20, 300)
                        async with gate:
                            await router.route(
                                ToolCall(f"r{i:04d}", "execute",
                                         {"task": f"sleep:{delay}"}),
                                lambda res: counts.__setitem__(
                                    res.call_id, counts.get(res.call_id, 0) + 1))
                    await asyncio.gather(*(one(i) for i in range(1000)))
                    await asyncio.sleep(0.5)
                    return counts, router.stats
            counts, stats = run(go())
        once = len(counts) == 1000 and all(v == 1 for v in counts.values())
        raced = stats.timeouts > 0 and stats.ok > 0
        report("router: exactly one ToolResult per call_id over 1000 randomized trials",
               once and raced,
               f"ok={stats.ok} timeout={stats.timeouts} late_discards={stats.late_replies_discarded}")

        # Wrong bearer token: zero state mutations on the real gateway.
        app = GatewayApp(tmp_path / "auth-state", token=TEST_TOKEN)
        with GatewayServer(app, port=0) as gw:
            before = app.state.digest()

            async def bad():
                cfg = RouterConfig(gateway_url=gw.url, bearer_token="wrong-token")
                async with ToolRouter(cfg) as router:
                    return await router.route(
                        ToolCall("bad1", "execute", {"task": "add eggs to my cart"}))
            result = run(bad())
            unchanged = app.state.digest() == before
        report("router: wrong bearer token -> error result, zero gateway mutations",
               result.status == "error" and unchanged)


class TestAnalyticsFidelity:
    def test_stats_reproduce_published_aggregates(self, tmp_path, capsys):
        fixture_dir = REPO / "fixtures" / "deployment"
        if not (fixture_dir / "interactions.jsonl").exists():
            generate_fixture(fixture_dir)
        started = time.monotonic()
        rep = compute_stats_from_dir(fixture_dir)
        elapsed = time.monotonic() - started

        checks = {
            "interactions=555": rep.total_interactions == 555,
            "sessions=118": rep.sessions == 118,
            "mean tools/command=3.2": round_half_up(rep.tool_executions_per_command_mean, 1) == 3.2,
            "camera=39%": round_half_up(100 * rep.camera_fraction, 0) == 39,
            "latency medians 12.2/13.4/15.5/8.4 s": (
                round_half_up(rep.latency_median_s, 1) == 12.2
                and round_half_up(rep.latency_median_non_browser_s, 1) == 13.4
                and round_half_up(rep.latency_median_browser_s, 1) == 15.5
                and round_half_up(rep.latency_median_voice_only_s, 1) == 8.4),
            "chain depth 21/27/23/29%": [
                round_half_up(100 * rep.chain_depth_fractions[b], 0)
                for b in ("0", "1", "2-3", "4+")] == [21, 27, 23, 29],
            "categories 14/30/16/12/19/9%": [
                round_half_up(100 * rep.category_fractions[c], 0)
                for c in ("communicate", "retrieve", "save", "recall", "shop",
                          "control")] == [14, 30, 16, 12, 19, 9],
            "session median 16.0 min": round_half_up(rep.session_duration_median_min, 1) == 16.0,
            "time of day 26/44/27/3%": [
                round_half_up(100 * rep.time_of_day_fractions[p], 0)
                for p in ("morning", "afternoon", "evening", "night")] == [26, 44, 27, 3],
            "runtime < 5 s": elapsed < 5.0,
        }
        for label, ok in checks.items():
            report(f"analytics fidelity: {label}", ok)


class TestMemoryOracle:
    def test_retrieval_equals_brute_force(self, tmp_path):
        from test_memory import WORDS, brute_force_rank
        rng = random.Random(123)
        mismatches = 0
        for trial in range(100):
            store = MemoryStore(tmp_path / f"m{trial}.jsonl")
            for i in range(rng.randint(0, 1000)):
                store.append(MemoryEntry(
                    text=" ".join(rng.choices(WORDS, k=rng.randint(1, 6))),
                    created_at=NOW_MS - rng.randint(0, 500) * 3_600_000,
                    importance=rng.random(), id=f"e{i:05d}"))
            query = RetrievalQuery(text=" ".join(rng.choices(WORDS, k=rng.randint(1, 4))),
                                   now=NOW_MS, k=rng.randint(1, 10),
                                   half_life_hours=rng.choice([24.0, 72.0, 200.0]))
            got = [s.entry.id for s in store.retrieve(query)]
            want = brute_force_rank(store.entries, query.text, query.now,
                                    query.half_life_hours, query.k)
            mismatches += got != want
        report("memory: retrieve(k) = brute-force scored sort over 100 random stores",
               mismatches == 0, f"{mismatches} mismatches")

        rng = random.Random(321)
        query = RetrievalQuery(text="anything", now=NOW_MS)
        violations = 0
        for _ in range(10_000):
            young = rng.uniform(0, 1000)
            old = young + rng.uniform(1e-6, 1000)
            s_young = score(MemoryEntry(text="x", created_at=int(NOW_MS - young * 3_600_000)),
                            query)
            s_old = score(MemoryEntry(text="x", created_at=int(NOW_MS - old * 3_600_000)),
                          query)
            violations += not s_old.score < s_young.score
        report("memory: recency monotonicity over 10^4 random pairs",
               violations == 0, f"{violations} violations")


class TestProtocolConformance:
    def test_wire_roundtrip_and_replay(self):
        from test_wire import fuzz_message
        rng = random.Random(99)
        per_kind = 10_000 // len(wire.ALL_KINDS) + 1
        bad = 0
        for kind in wire.ALL_KINDS:
            for i in range(per_kind):
                msg = fuzz_message(rng, kind, i)
                frame = wire.encode_message(msg)
                if wire.encode_message(wire.decode_message(frame)) != frame:
                    bad += 1
        report("protocol: byte-exact wire round-trip, all 9 kinds x 10^4 fuzzed payloads",
               bad == 0, f"{bad} failures")

        captures = sorted((REPO / "fixtures" / "captures").glob("*.jsonl"))
        results = [run(replay_capture(p)) for p in captures]
        ok = bool(captures) and all(r["violations"] == [] and r["terminal_phase"] == "closed"
                                    for r in results)
        report("protocol: every bundled capture replays to a terminal phase, "
               "no invariant violations", ok,
               f"{len(captures)} captures")


class TestStudyTaskScenarios:
    def test_product_lookup_device_and_notes_flows(self, tmp_path):
        state = GatewayState(tmp_path / "state", fixtures_dir=REPO / "fixtures" / "gateway")

        high = execute("check the reviews for the systems field guide book and add it "
                       "to my cart if the rating is above 4.5", None, state, NOW_MS)
        added = len(state.cart.read()["items"])
        low = execute("check the night harbor novel review score and add it to my "
                      "cart if the rating is above 4.5", None, state, NOW_MS)
        not_added = len(state.cart.read()["items"]) == added == 1
        report("scenario: product lookup adds to cart iff fixture rating > 4.5",
               high.status == "ok" and low.status == "ok" and not_added
               and "not above" in low.summary)

        before = state.devices.read()["light"]["on"]
        flip = execute("turn on the light" if not before else "turn off the light",
                       None, state, NOW_MS)
        after = state.devices.read()["light"]["on"]
        report("scenario: device-control flow flips the device store",
               flip.status == "ok" and after != before)

        receipt = (REPO / "fixtures" / "gateway" / "receipt_grocery.txt").read_text()
        note = execute("create a note with the store name, items and total from this "
                       f"receipt: {receipt}", None, state, NOW_MS)
        notes = state.notes.read_all()
        ok = (note.status == "ok" and len(notes) == 1
              and notes[0]["store"] == "GREEN HILLS MARKET"
              and notes[0]["total"] == "24.52")
        report("scenario: note-taking writes notes.jsonl with store name and total", ok)


class TestConsoleGate:
    """Secondary-component gate, exercised headless over the control channel."""

    def test_sensitive_call_blocked_until_verdict(self, gateway, tmp_path):
        import socket

        from websockets.asyncio.client import connect as ws_connect

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        control_port = probe.getsockname()[1]
        probe.close()

        async def go():
            server, port = await start_model_server(script=[])
            cfg = SessionConfig(endpoint=f"ws://127.0.0.1:{port}")
            options = RunnerOptions(expected_turns=1, max_run_s=10, auto_approve=False,
                                    control_port=control_port)
            runner = SessionRunner(
                cfg, RouterConfig(gateway_url=gateway.url, bearer_token=TEST_TOKEN), options)
            task = asyncio.create_task(runner.run())
            await asyncio.sleep(0.3)
            events = []
            mirror_latency = None
            async with ws_connect(f"ws://127.0.0.1:{control_port}") as ws:
                await ws.send(json.dumps({"cmd": "subscribe", "from_seq": 0}))

                async def collect():
                    async for raw in ws:
                        events.append((time.monotonic(), json.loads(raw)))

                collector = asyncio.create_task(collect())
                sent_at = time.monotonic()
                await ws.send(json.dumps(
                    {"cmd": "utterance", "text": "draft an email to Sara about results"}))
                call_id = None
                gateway_quiet = True
                for _ in range(100):
                    if mirror_latency is None:
                        user_seen = [t for t, e in events if e.get("type") == "transcript"
                                     and e["data"].get("role") == "user"]
                        if user_seen:
                            mirror_latency = user_seen[0] - sent_at
                    pending = [e for _, e in events if e.get("type") == "tool_state"
                               and e["data"].get("state") == "pending-approval"]
                    if pending:
                        call_id = pending[0]["data"]["call_id"]
                        break
                    await asyncio.sleep(0.05)
                gateway_quiet = gateway.app.state.steps.read_all() == []
                assert call_id is not None
                await ws.send(json.dumps({"cmd": "approval", "call_id": call_id,
                                          "verdict": "deny"}))
                summary = await task
                collector.cancel()
            server.close()
            await server.wait_closed()
            return summary, gateway_quiet, mirror_latency, runner

        summary, gateway_quiet, mirror_latency, runner = run(go())
        still_quiet = gateway.app.state.steps.read_all() == []
        denial_spoken = any(e.role == "assistant" and "denied by operator" in e.text
                            for e in runner.core.transcript.entries)
        record = summary.interactions[0]
        report("console gate: zero gateway requests for a sensitive call until a verdict",
               gateway_quiet and still_quiet)
        report("console gate: deny -> spoken denial and error-status interaction record",
               denial_spoken and record.tool_calls and not record.tool_calls[0].steps)
        report("console gate: transcript mirroring latency < 1 s on loopback",
               mirror_latency is not None and mirror_latency < 1.0,
               f"{(mirror_latency or 99):.3f}s")
