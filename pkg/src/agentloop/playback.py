"""Sequential playback schedule for the 24 kHz response audio.

There is no speaker in a headless run, so this tracks what *would* play and
when: chunks are scheduled back to back, a drain walks them in order, and a
barge-in (new user speech while audio is queued) drops whatever has not
started yet.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

PLAYBACK_RATE = 24000
BYTES_PER_SAMPLE = 2


def chunk_duration_ms(pcm: bytes, sample_rate: int = PLAYBACK_RATE) -> int:
    return len(pcm) * 1000 // (BYTES_PER_SAMPLE * sample_rate)


@dataclass
class ScheduledChunk:
    pcm: bytes
    sample_rate: int
    start_ms: int
    duration_ms: int


@dataclass
class PlaybackQueue:
    sample_rate: int = PLAYBACK_RATE
    played: list[ScheduledChunk] = field(default_factory=list)
    cancelled: int = 0
    _queue: deque[ScheduledChunk] = field(default_factory=deque)
    _cursor_ms: int = 0

    def schedule(self, pcm: bytes, sample_rate: int | None = None) -> ScheduledChunk:
        rate = sample_rate or self.sample_rate
        chunk = ScheduledChunk(pcm=pcm, sample_rate=rate, start_ms=self._cursor_ms,
                               duration_ms=chunk_duration_ms(pcm, rate))
        self._cursor_ms += chunk.duration_ms
        self._queue.append(chunk)
        return chunk

    def barge_in(self) -> int:
        """User spoke over playback: drop everything not yet drained."""
        dropped = len(self._queue)
        self.cancelled += dropped
        self._queue.clear()
        self._cursor_ms = self.played[-1].start_ms + self.played[-1].duration_ms if self.played else 0
        return dropped

    def pop_next(self) -> ScheduledChunk | None:
        if not self._queue:
            return None
        chunk = self._queue.popleft()
        self.played.append(chunk)
        return chunk

    def drain(self) -> list[ScheduledChunk]:
        out = []
        while (chunk := self.pop_next()) is not None:
            out.append(chunk)
        return out

    @property
    def pending(self) -> int:
        return len(self._queue)

    @property
    def scheduled_ms(self) -> int:
        return sum(c.duration_ms for c in self._queue)

    @property
    def played_ms(self) -> int:
        return sum(c.duration_ms for c in self.played)
