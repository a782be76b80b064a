from .records import (CATEGORIES, InteractionLog, InteractionRecord, RecordError,
                      SessionRecord, ToolCallRecord, categorize)
from .stats import (StatsReport, compute_stats, compute_stats_from_dir, lower_median,
                    render_report, round_half_up)
from .fixture import generate_fixture, verify_targets

__all__ = [
    "CATEGORIES", "InteractionLog", "InteractionRecord", "RecordError", "SessionRecord",
    "StatsReport", "ToolCallRecord", "categorize", "compute_stats",
    "compute_stats_from_dir", "generate_fixture", "lower_median", "render_report",
    "round_half_up", "verify_targets",
]
