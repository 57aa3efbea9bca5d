"""16-bit PCM mono WAV reading and writing on top of the stdlib ``wave`` module."""

from __future__ import annotations

import os
import wave

import numpy as np

from .errors import FormatError

PCM_SCALE = 32768.0


def read_wav(path):
    """Return ``(samples, sample_rate)`` with samples as float64 in [-1, 1)."""
    try:
        with wave.open(os.fspath(path), "rb") as f:
            if f.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono, got {f.getnchannels()} channels")
            if f.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
            if f.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV not supported")
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len(raw) % 2:
        raise FormatError(f"{path}: truncated sample data")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return data, rate


def write_wav(path, samples, sample_rate: int = 16000) -> None:
    """Write float samples as 16-bit PCM; values are clipped to [-1, 1]."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.clip(np.round(x * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(sample_rate))
        f.writeframes(pcm.tobytes())
