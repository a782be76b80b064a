"""Capture-side media pipeline.

Turns whatever the capture source produces (arbitrary-rate PCM, ~24 fps
frames) into the two wire units the session accepts: 100 ms chunks of
16 kHz mono PCM16, and JPEG frames throttled to roughly one per second.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from PIL import Image

JPEG_SOI = b"\xff\xd8"
JPEG_EOI = b"\xff\xd9"


class MediaError(ValueError):
    pass


class MediaMode(str, Enum):
    AUDIO_AND_VIDEO = "audio-and-video"
    AUDIO_ONLY = "audio-only"


@dataclass
class PipelineConfig:
    target_audio_rate: int = 16000
    chunk_ms: int = 100
    frame_interval_ms: int = 1000
    jpeg_quality: int = 50
    source_fps: int = 24

    def __post_init__(self) -> None:
        for name in ("target_audio_rate", "chunk_ms", "frame_interval_ms", "jpeg_quality", "source_fps"):
            if getattr(self, name) <= 0:
                raise MediaError(f"{name} must be positive")
        if (self.chunk_ms * self.target_audio_rate) % 1000 != 0:
            raise MediaError("chunk_ms * target_audio_rate must be divisible by 1000")
        if not 1 <= self.jpeg_quality <= 100:
            raise MediaError("jpeg_quality must be in [1,100]")

    @property
    def chunk_samples(self) -> int:
        return self.chunk_ms * self.target_audio_rate // 1000


@dataclass
class RawAudio:
    samples: np.ndarray  # int16, interleaved when channels == 2
    sample_rate: int
    channels: int = 1

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.sample_rate <= 0:
            raise MediaError("sample_rate must be positive")
        if self.channels not in (1, 2):
            raise MediaError(f"unsupported channel count {self.channels} (only mono/stereo)")
        if len(self.samples) % self.channels != 0:
            raise MediaError("sample count not divisible by channel count")

    @property
    def frames(self) -> int:
        return len(self.samples) // self.channels

    def duration_s(self) -> float:
        return self.frames / self.sample_rate


@dataclass
class AudioChunk:
    samples: np.ndarray  # exactly one chunk of int16 at the wire rate
    seq: int
    capture_ts: int  # ms since stream start
    pad_samples: int = 0  # trailing zero-padding added by flush()

    def to_bytes(self) -> bytes:
        return self.samples.astype("<i2").tobytes()


@dataclass
class VideoFrame:
    jpeg_bytes: bytes
    capture_ts: int
    width: int
    height: int
    quality: int = 50

    def __post_init__(self) -> None:
        if not (self.jpeg_bytes.startswith(JPEG_SOI) and self.jpeg_bytes.endswith(JPEG_EOI)):
            raise MediaError("frame bytes are not a JPEG stream")
        if not 1 <= self.quality <= 100:
            raise MediaError("quality must be in [1,100]")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def downmix_to_mono(raw: RawAudio) -> RawAudio:
    """Average the two channels (rounding half away from zero)."""
    if raw.channels == 1:
        return raw
    pairs = raw.samples.reshape(-1, 2).astype(np.float64)
    mono = _round_half_away(pairs.mean(axis=1)).astype(np.int16)
    return RawAudio(samples=mono, sample_rate=raw.sample_rate, channels=1)


def resample_to_wire(raw: RawAudio, cfg: PipelineConfig | None = None) -> RawAudio:
    """Convert to mono at the wire rate via linear interpolation.

    Good enough for speech; fidelity is checked spectrally in tests rather
    than by matching any particular resampler.
    """
    cfg = cfg or PipelineConfig()
    mono = downmix_to_mono(raw)
    if mono.sample_rate == cfg.target_audio_rate:
        return mono
    n_in = len(mono.samples)
    n_out = int(round(n_in * cfg.target_audio_rate / mono.sample_rate))
    if n_in == 0 or n_out == 0:
        return RawAudio(samples=np.zeros(0, dtype=np.int16), sample_rate=cfg.target_audio_rate)
    src = mono.samples.astype(np.float64)
    # Sample positions in source time for each output sample.
    pos = np.arange(n_out, dtype=np.float64) * (mono.sample_rate / cfg.target_audio_rate)
    idx = np.minimum(pos.astype(np.int64), n_in - 1)
    nxt = np.minimum(idx + 1, n_in - 1)
    frac = pos - idx
    out = src[idx] * (1.0 - frac) + src[nxt] * frac
    out = np.clip(_round_half_away(out), -32768, 32767).astype(np.int16)
    return RawAudio(samples=out, sample_rate=cfg.target_audio_rate, channels=1)


class AudioChunker:
    """Stateful accumulator cutting a 16 kHz mono stream into 100 ms chunks.

    Residual samples shorter than one chunk stay buffered; flush() emits them
    zero-padded (only ever used at session end so no silence is injected
    mid-stream).
    """

    def __init__(self, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()
        self._buffer = np.zeros(0, dtype=np.int16)
        self._next_seq = 0
        self._emitted_samples = 0

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    def push(self, audio: RawAudio) -> list[AudioChunk]:
        if audio.channels != 1 or audio.sample_rate != self.cfg.target_audio_rate:
            raise MediaError("chunker input must already be mono at the wire rate")
        self._buffer = np.concatenate([self._buffer, audio.samples])
        size = self.cfg.chunk_samples
        chunks: list[AudioChunk] = []
        while len(self._buffer) >= size:
            chunk, self._buffer = self._buffer[:size], self._buffer[size:]
            chunks.append(self._make_chunk(chunk, pad=0))
        return chunks

    def flush(self) -> AudioChunk | None:
        if len(self._buffer) == 0:
            return None
        size = self.cfg.chunk_samples
        pad = size - len(self._buffer)
        chunk = np.concatenate([self._buffer, np.zeros(pad, dtype=np.int16)])
        self._buffer = np.zeros(0, dtype=np.int16)
        return self._make_chunk(chunk, pad=pad)

    def _make_chunk(self, samples: np.ndarray, pad: int) -> AudioChunk:
        ts = self._emitted_samples * 1000 // self.cfg.target_audio_rate
        out = AudioChunk(samples=samples, seq=self._next_seq, capture_ts=ts, pad_samples=pad)
        self._next_seq += 1
        self._emitted_samples += len(samples)
        return out


class FrameThrottle:
    """Timestamp gate passing at most ~one frame per interval.

    First frame always passes; afterwards a frame passes iff its timestamp is
    at least frame_interval_ms after the last passed one. In audio-only mode
    frames are dropped outright (never deferred).
    """

    def __init__(self, cfg: PipelineConfig | None = None, mode: MediaMode = MediaMode.AUDIO_AND_VIDEO):
        self.cfg = cfg or PipelineConfig()
        self.mode = mode
        self._last_ts: int | None = None
        self._prev_seen_ts: int | None = None

    def set_mode(self, mode: MediaMode) -> None:
        self.mode = mode

    def offer(self, capture_ts: int) -> bool:
        """Return True when a frame captured at capture_ts should be emitted."""
        if self._prev_seen_ts is not None and capture_ts < self._prev_seen_ts:
            raise MediaError(f"frame timestamps must be non-decreasing "
                             f"({capture_ts} after {self._prev_seen_ts})")
        self._prev_seen_ts = capture_ts
        if self.mode is MediaMode.AUDIO_ONLY:
            return False
        if self._last_ts is None or capture_ts - self._last_ts >= self.cfg.frame_interval_ms:
            self._last_ts = capture_ts
            return True
        return False


def encode_jpeg(rgb: np.ndarray, capture_ts: int, cfg: PipelineConfig | None = None) -> VideoFrame:
    """Compress an HxWx3 uint8 raster to a VideoFrame at the configured quality."""
    cfg = cfg or PipelineConfig()
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise MediaError(f"expected HxWx3 RGB raster, got shape {rgb.shape}")
    height, width = rgb.shape[:2]
    if width == 0 or height == 0:
        raise MediaError("image has a zero dimension")
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="JPEG", quality=cfg.jpeg_quality)
    return VideoFrame(jpeg_bytes=buf.getvalue(), capture_ts=capture_ts,
                      width=width, height=height, quality=cfg.jpeg_quality)


def decode_jpeg(frame: VideoFrame) -> np.ndarray:
    img = Image.open(io.BytesIO(frame.jpeg_bytes))
    return np.asarray(img.convert("RGB"))


@dataclass
class MediaPipeline:
    """Bundles the audio and frame paths behind one mode-aware front end."""

    cfg: PipelineConfig = field(default_factory=PipelineConfig)
    mode: MediaMode = MediaMode.AUDIO_AND_VIDEO

    def __post_init__(self) -> None:
        self.chunker = AudioChunker(self.cfg)
        self.throttle = FrameThrottle(self.cfg, self.mode)

    def set_mode(self, mode: MediaMode) -> None:
        self.mode = mode
        self.throttle.set_mode(mode)

    def push_audio(self, raw: RawAudio) -> list[AudioChunk]:
        return self.chunker.push(resample_to_wire(raw, self.cfg))

    def flush_audio(self) -> AudioChunk | None:
        return self.chunker.flush()

    def push_frame(self, rgb: np.ndarray, capture_ts: int) -> VideoFrame | None:
        if self.throttle.offer(capture_ts):
            return encode_jpeg(rgb, capture_ts, self.cfg)
        return None
