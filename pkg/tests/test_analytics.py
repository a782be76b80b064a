import json
import random
import string

import pytest

from agentloop.analytics import (categorize, compute_stats, compute_stats_from_dir,
                                 generate_fixture, render_report, round_half_up,
                                 verify_targets)
from agentloop.analytics.records import (CATEGORIES, InteractionLog, InteractionRecord,
                                         RecordError, SessionRecord, ToolCallRecord)
from agentloop.analytics.stats import StatsReport, lower_median
from agentloop.tools import StepRecord

H = 3_600_000
# 2026-03-02 00:00 UTC; offsets place interactions at known UTC hours.
DAY0 = 1_772_409_600_000


def interaction(i, session="s1", hour=10, minute=0, latency=1000, steps=(),
                category="retrieve", camera=False, sources=(), responded=True):
    started = DAY0 + hour * H + minute * 60_000
    tool_calls = []
    if steps:
        tool_calls = [ToolCallRecord(name="execute",
                                     steps=[StepRecord(k, "d", 5) for k in steps])]
    return InteractionRecord(
        id=f"i{i}", session_id=session, started_at=started,
        first_response_at=started + latency if responded else None,
        completed_at=started + latency + 400 if responded else None,
        utterance="what is this", used_camera=camera, tool_calls=tool_calls,
        category=category, data_sources=set(sources), responded=responded)


class TestCategorize:
    @pytest.mark.parametrize("utterance,expected", [
        ("archive all except Sara's email", "communicate"),
        ("send a text to the group", "communicate"),
        ("What is this line for?", "retrieve"),
        ("how long is the wait here", "retrieve"),
        ("save this hotel info", "save"),
        ("note down the room number", "save"),
        ("What did I do yesterday?", "recall"),
        ("when did I come here last time", "recall"),
        ("add this to my Amazon cart", "shop"),
        ("check the review score for this book", "shop"),
        ("Turn off the light", "control"),
        ("upload the recording to the backup folder", "control"),
    ])
    def test_examples(self, utterance, expected):
        assert categorize(utterance) == expected

    def test_empty_rejected(self):
        with pytest.raises(RecordError):
            categorize("  ")

    def test_totality_over_random_text(self):
        rng = random.Random(5)
        alphabet = string.ascii_letters + "  '?!"
        for _ in range(2000):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 60)))
            if not text.strip():
                text = "x"
            assert categorize(text) in CATEGORIES


class TestRecords:
    def test_round_trip_byte_equal(self, tmp_path):
        log = InteractionLog(tmp_path)
        record = interaction(1, steps=("shell", "browser"), sources=("web", "email"))
        log.log_interaction(record)
        raw = log.interactions_path.read_text()
        parsed, bad = log.read_interactions()
        assert bad == 0 and parsed == [record]
        log2 = InteractionLog(tmp_path / "again")
        log2.log_interaction(parsed[0])
        assert log2.interactions_path.read_text() == raw

    def test_completed_before_started_rejected(self):
        with pytest.raises(RecordError):
            InteractionRecord(id="x", session_id="s", started_at=1000,
                              first_response_at=2000, completed_at=500,
                              utterance="u")

    def test_response_before_start_rejected(self):
        with pytest.raises(RecordError):
            InteractionRecord(id="x", session_id="s", started_at=1000,
                              first_response_at=900, utterance="u")

    def test_malformed_lines_counted_not_fatal(self, tmp_path):
        log = InteractionLog(tmp_path)
        log.log_interaction(interaction(1))
        with log.interactions_path.open("a") as fh:
            fh.write("{broken\n")
            fh.write(json.dumps({"id": "x"}) + "\n")
        parsed, bad = log.read_interactions()
        assert len(parsed) == 1 and bad == 2


class TestLowerMedian:
    def test_odd_is_middle(self):
        assert lower_median([3, 1, 2]) == 2

    def test_even_is_lower_middle(self):
        assert lower_median([4, 1, 2, 3]) == 2

    def test_empty_is_zero(self):
        assert lower_median([]) == 0.0


class TestComputeStats:
    def small_log(self):
        # Hand-computed log: expectations below are derived on paper, not from
        # the implementation.
        interactions = [
            interaction(0, hour=6, latency=8000),                                # voice-only, morning
            interaction(1, hour=13, latency=12000, steps=("shell",),
                        category="control"),                                     # non-browser, afternoon
            interaction(2, hour=18, latency=20000, steps=("browser", "web_search"),
                        category="shop", camera=True, sources=("web", "email")),  # browser, evening
            interaction(3, hour=23, latency=4000, steps=("memory",),
                        category="recall", sources=("memory",), session="s2"),   # night
            interaction(4, hour=7, responded=False, session="s2"),               # no response, morning
        ]
        sessions = [SessionRecord("s1", "p1", ["i0", "i1", "i2"], duration_ms=10 * 60_000),
                    SessionRecord("s2", "p2", ["i3", "i4"], duration_ms=20 * 60_000)]
        return interactions, sessions

    def test_hand_computed_expectations(self):
        interactions, sessions = self.small_log()
        report = compute_stats(interactions, sessions)
        assert report.total_interactions == 5
        assert report.sessions == 2
        assert report.participants == 2
        assert report.active_participant_days == 2
        assert report.interactions_per_day_mean == pytest.approx(2.5)
        assert report.total_steps == 4
        assert report.tool_executions_per_command_mean == pytest.approx(0.8)
        assert report.camera_fraction == pytest.approx(1 / 5)
        assert report.multi_source_fraction == pytest.approx(1 / 5)
        assert report.no_response_fraction == pytest.approx(1 / 5)
        # latencies: overall sorted [4000, 8000, 12000, 20000] -> lower median 8000
        assert report.latency_median_s == pytest.approx(8.0)
        assert report.latency_median_voice_only_s == pytest.approx(8.0)
        assert report.latency_median_browser_s == pytest.approx(20.0)
        # non-browser group: [12000, 4000] sorted -> lower median 4000
        assert report.latency_median_non_browser_s == pytest.approx(4.0)
        assert report.chain_depth_counts == {"0": 2, "1": 2, "2-3": 1, "4+": 0}
        assert report.time_of_day_counts == {"morning": 2, "afternoon": 1,
                                             "evening": 1, "night": 1}
        assert report.session_duration_median_min == pytest.approx(10.0)
        assert report.category_counts["retrieve"] == 2

    def test_conservation(self):
        interactions, sessions = self.small_log()
        report = compute_stats(interactions, sessions)
        assert sum(report.chain_depth_counts.values()) == report.total_interactions
        assert sum(report.time_of_day_counts.values()) == report.total_interactions
        assert sum(report.category_counts.values()) == report.total_interactions
        assert sum(report.category_fractions.values()) == pytest.approx(1.0)
        assert sum(report.time_of_day_fractions.values()) == pytest.approx(1.0)

    def test_empty_log_all_zero_with_flag(self, tmp_path):
        report = compute_stats_from_dir(tmp_path)
        assert report.empty is True
        assert report.total_interactions == 0
        assert "empty" in render_report(report)

    def test_malformed_lines_reported(self, tmp_path):
        log = InteractionLog(tmp_path)
        log.log_interaction(interaction(0))
        log.interactions_path.open("a").write("junk\n")
        report = compute_stats_from_dir(tmp_path)
        assert report.malformed_lines == 1
        assert "malformed" in render_report(report)


class TestRender:
    def test_json_round_trip(self):
        interactions = [interaction(0, steps=("shell",))]
        report = compute_stats(interactions, [SessionRecord("s1", "p1", ["i0"], 60_000)])
        parsed = StatsReport.from_dict(json.loads(render_report(report, "json")))
        assert parsed == report

    def test_table_has_chain_depth_row_with_four_buckets(self):
        report = compute_stats([interaction(0)], [SessionRecord("s1", "p1", ["i0"], 1)])
        table = render_report(report, "table")
        row = next(line for line in table.splitlines() if line.startswith("chain depth"))
        for bucket in ("0:", "1:", "2-3:", "4+:"):
            assert bucket in row

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError, match="xml"):
            render_report(StatsReport(), "xml")

    def test_rounding_is_half_up(self):
        assert round_half_up(13.75, 1) == 13.8
        assert round_half_up(2.25, 1) == 2.3
        assert round_half_up(38.92, 0) == 39.0


class TestFixture:
    def test_generator_hits_every_target(self, tmp_path):
        report = generate_fixture(tmp_path / "dep")
        assert verify_targets(report) == []

    def test_generator_deterministic(self, tmp_path):
        generate_fixture(tmp_path / "a")
        generate_fixture(tmp_path / "b")
        for name in ("interactions.jsonl", "sessions.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_555_lines(self, tmp_path):
        generate_fixture(tmp_path / "dep")
        lines = (tmp_path / "dep" / "interactions.jsonl").read_text().splitlines()
        assert len(lines) == 555
        sessions = (tmp_path / "dep" / "sessions.jsonl").read_text().splitlines()
        assert len(sessions) == 118

    def test_bundled_fixture_current(self, tmp_path):
        """The committed fixture must match what the generator produces today."""
        from pathlib import Path
        bundled = Path(__file__).resolve().parent.parent / "fixtures" / "deployment"
        if not (bundled / "interactions.jsonl").exists():
            pytest.skip("bundled fixture not present")
        generate_fixture(tmp_path / "fresh")
        for name in ("interactions.jsonl", "sessions.jsonl"):
            assert (tmp_path / "fresh" / name).read_bytes() == (bundled / name).read_bytes()
