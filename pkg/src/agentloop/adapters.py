"""File-based capture adapters used to simulate the wearable's sensors.

A WAV file stands in for the microphone and a directory of images for the
camera. Frame timestamps are synthesized from the nominal source fps.
"""
from __future__ import annotations

import wave
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .media import MediaError, RawAudio

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")


def read_wav(path: str | Path) -> RawAudio:
    """Load a PCM16 WAV file (any rate, 1-2 channels)."""
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        if width != 2:
            raise MediaError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
        if channels not in (1, 2):
            raise MediaError(f"{path}: expected 1-2 channels, got {channels}")
        data = wf.readframes(wf.getnframes())
    samples = np.frombuffer(data, dtype="<i2")
    return RawAudio(samples=samples, sample_rate=rate, channels=channels)


def write_wav(path: str | Path, audio: RawAudio) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(audio.channels)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(audio.samples.astype("<i2").tobytes())


def iter_wav_blocks(path: str | Path, block_ms: int = 200) -> Iterator[RawAudio]:
    """Yield the WAV in block_ms slices, preserving rate/channels."""
    audio = read_wav(path)
    frames_per_block = max(1, audio.sample_rate * block_ms // 1000)
    step = frames_per_block * audio.channels
    for start in range(0, len(audio.samples), step):
        block = audio.samples[start:start + step]
        if len(block) % audio.channels:
            block = block[: len(block) - len(block) % audio.channels]
        if len(block):
            yield RawAudio(samples=block, sample_rate=audio.sample_rate, channels=audio.channels)


def iter_frame_dir(path: str | Path, source_fps: int = 24) -> Iterator[tuple[np.ndarray, int]]:
    """Yield (rgb raster, capture_ts ms) for each image, in name order.

    capture_ts = index / source_fps * 1000, i.e. the directory is treated as
    a fixed-rate frame dump.
    """
    folder = Path(path)
    if not folder.is_dir():
        raise MediaError(f"{path} is not a directory")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    for index, file in enumerate(files):
        rgb = np.asarray(Image.open(file).convert("RGB"))
        yield rgb, index * 1000 // source_fps


def synth_voiced_wav(path: str | Path, voiced_ms: int = 1200, trailing_silence_ms: int = 500,
                     sample_rate: int = 16000, channels: int = 1, seed: int = 7) -> Path:
    """Write a small fixture WAV: band-limited noise burst then silence.

    The mock model's energy gate treats the burst as speech and the trailing
    silence as end of utterance.
    """
    rng = np.random.default_rng(seed)
    n_voiced = sample_rate * voiced_ms // 1000
    n_sil = sample_rate * trailing_silence_ms // 1000
    t = np.arange(n_voiced) / sample_rate
    tone = 0.35 * np.sin(2 * np.pi * 220.0 * t) + 0.15 * np.sin(2 * np.pi * 470.0 * t)
    tone += 0.05 * rng.standard_normal(n_voiced)
    voiced = np.clip(tone * 32767, -32768, 32767).astype(np.int16)
    mono = np.concatenate([voiced, np.zeros(n_sil, dtype=np.int16)])
    samples = np.repeat(mono, channels) if channels == 2 else mono
    write_wav(path, RawAudio(samples=samples, sample_rate=sample_rate, channels=channels))
    return Path(path)
