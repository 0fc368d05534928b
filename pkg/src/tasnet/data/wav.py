"""16-bit PCM mono WAV input/output."""

from __future__ import annotations

import os
import tempfile
import wave
from pathlib import Path

import numpy as np

DEFAULT_RATE = 8000


class WavFormatError(ValueError):
    pass


def quantize(x: np.ndarray) -> np.ndarray:
    """Clamp to [-1, 1] and map to int16, rounding half away from zero."""
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0) * 32768.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def wav_write(path, x, rate: int = DEFAULT_RATE) -> None:
    """Write a mono waveform atomically (temp file + rename)."""
    path = Path(path)
    data = quantize(x)
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono samples, got shape {data.shape}")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh, wave.open(fh, "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(int(rate))
            w.writeframes(data.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def wav_read(path, expected_rate: int | None = DEFAULT_RATE) -> tuple[np.ndarray, int]:
    """Read a PCM-16 mono file as float64 samples in [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from None
    except EOFError:
        raise WavFormatError(f"{path}: truncated WAV file") from None
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, found {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, found {8 * width}-bit")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate
