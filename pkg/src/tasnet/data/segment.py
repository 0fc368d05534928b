from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZERO_ENERGY = 1e-8


@dataclass
class SegmentedUtterance:
    """Non-overlapping unit-norm segments of one waveform.

    ``segments`` is (K, L); ``scales`` holds each row's original L2 norm (0 for
    rows below the zero-energy guard, which are stored as zeros).
    """

    segments: np.ndarray
    scales: np.ndarray
    pad_len: int
    sample_rate: int = 8000

    @property
    def num_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def segment_length(self) -> int:
        return self.segments.shape[1]

    @property
    def length(self) -> int:
        return self.segments.size - self.pad_len


def frame(x: np.ndarray, L: int) -> tuple[np.ndarray, int]:
    """Zero-pad the last axis of ``x`` to a multiple of ``L`` and split it into rows."""
    if L <= 0:
        raise ValueError(f"segment length must be positive, got {L}")
    n = x.shape[-1]
    if n < 1:
        raise ValueError("cannot segment an empty waveform")
    k = -(-n // L)
    pad = k * L - n
    if pad:
        x = np.concatenate([x, np.zeros(x.shape[:-1] + (pad,), dtype=x.dtype)], axis=-1)
    return x.reshape(x.shape[:-1] + (k, L)), pad


def unit_normalize(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each row to unit L2 norm; rows under the guard become zeros with scale 0."""
    norms = np.sqrt(np.sum(frames * frames, axis=-1))
    live = norms >= ZERO_ENERGY
    safe = np.where(live, norms, 1.0)
    rows = np.where(live[..., None], frames / safe[..., None], 0.0).astype(frames.dtype)
    return rows, np.where(live, norms, 0.0).astype(frames.dtype)


def segment(x, L: int, sample_rate: int = 8000, dtype=np.float64) -> SegmentedUtterance:
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 1:
        raise ValueError(f"expected a mono waveform, got shape {x.shape}")
    frames, pad = frame(x, L)
    rows, scales = unit_normalize(frames)
    return SegmentedUtterance(rows, scales, pad, sample_rate)


def desegment(seg: SegmentedUtterance) -> np.ndarray:
    out = (seg.segments * seg.scales[:, None]).reshape(-1)
    return out[: out.size - seg.pad_len]
