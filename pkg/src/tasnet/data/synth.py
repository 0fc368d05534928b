"""Synthetic two-source mixtures with spectrally disjoint sources.

Each source is either a harmonic complex (fundamental drawn from a range,
partials kept inside a frequency band, slow syllable-like amplitude
envelope) or band-limited noise, or a waveform loaded from disk.  Source 2
is rescaled so the source-1/source-2 power ratio equals ``snr_db``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wav import wav_read

MAX_ATTEMPTS = 10
PEAK = 0.9


@dataclass(frozen=True)
class SourceSpec:
    kind: str = "harmonic"  # harmonic | noise | stored
    f0_range: tuple[float, float] = (100.0, 180.0)
    band: tuple[float, float] = (80.0, 1000.0)
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("harmonic", "noise", "stored"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "stored" and not self.path:
            raise ValueError("stored source needs a path")
        lo, hi = self.band
        if not 0 <= lo < hi:
            raise ValueError(f"bad band {self.band}")


LOW_VOICE = SourceSpec("harmonic", (100.0, 180.0), (80.0, 1000.0))
HIGH_VOICE = SourceSpec("harmonic", (250.0, 400.0), (1500.0, 3600.0))


@dataclass(frozen=True)
class MixtureSpec:
    sources: tuple[SourceSpec, SourceSpec] = (LOW_VOICE, HIGH_VOICE)
    snr_db: float = 0.0
    duration_s: float = 0.5
    sample_rate: int = 8000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.snr_db <= 5.0:
            raise ValueError(f"snr_db must lie in [0, 5], got {self.snr_db}")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        a, b = self.sources
        if a.kind != "stored" and b.kind != "stored":
            if not (a.band[1] <= b.band[0] or b.band[1] <= a.band[0]):
                raise ValueError(f"source bands overlap: {a.band} and {b.band}")
            if a.kind == b.kind == "harmonic":
                if not (a.f0_range[1] < b.f0_range[0] or b.f0_range[1] < a.f0_range[0]):
                    raise ValueError(f"fundamental ranges overlap: {a.f0_range} and {b.f0_range}")


def _envelope(rng: np.random.Generator, n: int, rate: int) -> np.ndarray:
    t = np.arange(n) / rate
    rate_hz = rng.uniform(2.0, 5.0)
    phase = rng.uniform(0, 2 * np.pi)
    return 0.6 + 0.4 * np.sin(2 * np.pi * rate_hz * t + phase)


def _harmonic(rng, src: SourceSpec, n: int, rate: int) -> np.ndarray:
    f0 = rng.uniform(*src.f0_range)
    t = np.arange(n) / rate
    nyquist = rate / 2
    lo, hi = src.band
    out = np.zeros(n)
    k_first = max(1, int(np.ceil(lo / f0)))
    k = k_first
    while k * f0 <= min(hi, nyquist - 1):
        amp = rng.uniform(0.5, 1.0) / (k - k_first + 1)
        out += amp * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
        k += 1
    return out * _envelope(rng, n, rate)


def _noise(rng, src: SourceSpec, n: int, rate: int) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < src.band[0]) | (freqs > src.band[1])] = 0
    return np.fft.irfft(spec, n) * _envelope(rng, n, rate)


def _stored(src: SourceSpec, n: int, rate: int) -> np.ndarray:
    x, _ = wav_read(src.path, expected_rate=rate)
    if x.size >= n:
        return x[:n].copy()
    return np.concatenate([x, np.zeros(n - x.size)])


def _draw(rng, src: SourceSpec, n: int, rate: int) -> np.ndarray:
    if src.kind == "harmonic":
        return _harmonic(rng, src, n, rate)
    if src.kind == "noise":
        return _noise(rng, src, n, rate)
    return _stored(src, n, rate)


def power(x: np.ndarray) -> float:
    return float(np.mean(np.asarray(x, dtype=np.float64) ** 2))


def synth_mixture(spec: MixtureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(mixture, source_1, source_2)``; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.sample_rate))
    sources = []
    for src in spec.sources:
        for _ in range(MAX_ATTEMPTS):
            s = _draw(rng, src, n, spec.sample_rate)
            if power(s) > 0:
                break
        else:
            raise RuntimeError(f"{src.kind} source drew zero power {MAX_ATTEMPTS} times")
        sources.append(s)
    s1, s2 = sources
    s2 = s2 * np.sqrt(power(s1) / power(s2) / 10 ** (spec.snr_db / 10))
    peak = max(np.max(np.abs(s1 + s2)), 1e-12)
    g = PEAK / peak
    s1, s2 = s1 * g, s2 * g
    return s1 + s2, s1, s2


def synth_batch(
    count: int, duration_s: float, seed: int, sample_rate: int = 8000,
    sources: tuple[SourceSpec, SourceSpec] = (LOW_VOICE, HIGH_VOICE),
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """``count`` mixtures with per-item seeds and SNRs drawn uniformly from [0, 5] dB."""
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(count):
        item_seed = int(rng.integers(2**31))
        snr = float(rng.uniform(0.0, 5.0))
        items.append(synth_mixture(MixtureSpec(sources, snr, duration_s, sample_rate, item_seed)))
    return items
