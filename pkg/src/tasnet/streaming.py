"""Segment-by-segment causal separation with latency accounting.

Layer normalization works on one segment's weight vector at a time, so a
stream needs no running statistics: carrying the LSTM state from segment to
segment reproduces the offline causal forward pass.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .model import ModelParams, bind, check_finite, forward_batch

log = logging.getLogger(__name__)

LATENCY_COLUMNS = ("segments", "T_i_ms", "T_p_mean_ms", "T_p_p95_ms", "T_tot_ms")


class StreamError(RuntimeError):
    pass


@dataclass
class StreamState:
    buffer: np.ndarray
    lstm_state: list | None = None
    segments: int = 0
    timings_ns: list[int] = field(default_factory=list)
    closed: bool = False


@dataclass(frozen=True)
class LatencyReport:
    T_i: float
    T_p: float
    T_p_p95: float
    segments_processed: int
    timings_ms: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def T_tot(self) -> float:
        return self.T_i + self.T_p

    def as_row(self) -> dict:
        return {
            "segments": self.segments_processed,
            "T_i_ms": self.T_i,
            "T_p_mean_ms": self.T_p,
            "T_p_p95_ms": self.T_p_p95,
            "T_tot_ms": self.T_tot,
        }


def initial_delay_ms(L: int, sample_rate: int) -> float:
    """Buffering delay before the first segment can be processed."""
    return L * 1000.0 / sample_rate


class StreamingSeparator:
    """Causal separator fed with arbitrary-size chunks of samples."""

    def __init__(self, params: ModelParams, sample_rate: int = 8000):
        if params.config.bidirectional:
            raise StreamError("a bidirectional (noncausal) model cannot stream")
        check_finite(params)
        self.params = params
        self.config = params.config
        self.sample_rate = sample_rate
        self.state = StreamState(buffer=np.zeros(0))

    def _process(self, seg: np.ndarray) -> np.ndarray:
        start = time.perf_counter_ns()
        tape = Tape(self.params.dtype, record=False)
        res = forward_batch(tape, seg[None], bind(tape, self.params, check=False), self.config, self.state.lstm_state)
        out = res.estimates.value[0]
        self.state.lstm_state = res.final_state
        self.state.timings_ns.append(time.perf_counter_ns() - start)
        self.state.segments += 1
        return out

    def push(self, samples) -> np.ndarray:
        """Buffer ``samples``; return (C, k*L) output for every completed segment."""
        st = self.state
        if st.closed:
            raise StreamError("stream already flushed")
        L = self.config.L
        buf = np.concatenate([st.buffer, np.asarray(samples, dtype=np.float64).reshape(-1)])
        k = buf.size // L
        outs = [self._process(buf[i * L : (i + 1) * L]) for i in range(k)]
        st.buffer = buf[k * L :]
        if not outs:
            return np.zeros((self.config.C, 0), dtype=self.params.dtype)
        return np.concatenate(outs, axis=1)

    def flush(self) -> np.ndarray:
        """Zero-pad and process the remaining partial segment, then close the stream."""
        st = self.state
        if st.closed:
            raise StreamError("stream already flushed")
        st.closed = True
        n = st.buffer.size
        if n == 0:
            return np.zeros((self.config.C, 0), dtype=self.params.dtype)
        seg = np.concatenate([st.buffer, np.zeros(self.config.L - n)])
        st.buffer = np.zeros(0)
        return self._process(seg)[:, :n]

    def latency(self) -> LatencyReport:
        """Timing summary; the first (warm-up) segment is excluded from T_p."""
        t = np.asarray(self.state.timings_ns[1:], dtype=np.float64) / 1e6
        mean = float(t.mean()) if t.size else 0.0
        p95 = float(np.percentile(t, 95)) if t.size else 0.0
        return LatencyReport(initial_delay_ms(self.config.L, self.sample_rate), mean, p95, self.state.segments,
                             tuple(t.tolist()))


def separate_stream(params: ModelParams, x, chunk_sizes, sample_rate: int = 8000):
    """Stream ``x`` through a separator using the given chunk sizes (cycled).

    Returns ``(estimates (C, len(x)), LatencyReport)``.
    """
    x = np.asarray(x, dtype=np.float64)
    sep = StreamingSeparator(params, sample_rate)
    sizes = list(chunk_sizes) or [params.config.L]
    pieces, pos, i = [], 0, 0
    while pos < x.size:
        n = max(1, int(sizes[i % len(sizes)]))
        pieces.append(sep.push(x[pos : pos + n]))
        pos += n
        i += 1
    pieces.append(sep.flush())
    return np.concatenate(pieces, axis=1), sep.latency()


def profile_latency(params: ModelParams, duration_s: float = 1.0, chunk_size: int | None = None,
                    sample_rate: int = 8000, seed: int = 0) -> LatencyReport:
    """Time per-segment processing on a seeded noise input of ``duration_s``."""
    rng = np.random.default_rng(seed)
    x = 0.1 * rng.standard_normal(int(round(duration_s * sample_rate)))
    _, report = separate_stream(params, x, [chunk_size or params.config.L], sample_rate)
    if report.T_p > report.T_i:
        log.warning("mean processing time %.3f ms exceeds segment duration %.3f ms (slower than real time)",
                    report.T_p, report.T_i)
    return report
