"""Encoder / mask estimator / decoder network.

Shapes used throughout (B = batch of utterances, K = segments per
utterance, L = segment length, N = basis count, C = sources):

    segments   (B*K, L)    unit-norm mixture segments
    W          (B, K, N)   nonnegative mixture weights
    M, D       (B, C, K, N) masks and source weights
    estimates  (B, C, T)
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import LstmCellParams, Node, ShapeError, Tape
from .data.segment import frame, unit_normalize

LN_EPS = 1e-8
SKIP_MODES = ("second_to_last", "every_pair", "none")


@dataclass(frozen=True)
class ModelConfig:
    L: int = 40
    N: int = 500
    C: int = 2
    num_layers: int = 4
    hidden_size: int = 1000
    bidirectional: bool = False
    fc_hidden: int = 0  # 0 -> C*N; the FC layer emits the C stacked masks directly
    skip: str = "second_to_last"
    seed: int = 0

    def __post_init__(self):
        if self.L < 1 or self.N < 1:
            raise ValueError(f"L and N must be >= 1 (got L={self.L}, N={self.N})")
        if self.C < 2:
            raise ValueError(f"C must be >= 2, got {self.C}")
        if self.num_layers < 1 or self.hidden_size < 1:
            raise ValueError("need at least one LSTM layer with a positive hidden size")
        if self.skip not in SKIP_MODES:
            raise ValueError(f"skip must be one of {SKIP_MODES}, got {self.skip!r}")
        if self.fc_hidden not in (0, self.C * self.N):
            raise ValueError(f"fc_hidden must equal C*N={self.C * self.N}, got {self.fc_hidden}")

    @classmethod
    def noncausal(cls, **overrides) -> "ModelConfig":
        kw = dict(hidden_size=500, bidirectional=True)
        kw.update(overrides)
        return cls(**kw)

    @property
    def causal(self) -> bool:
        return not self.bidirectional

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fw", "bw") if self.bidirectional else ("fw",)

    @property
    def feature_size(self) -> int:
        return self.hidden_size * len(self.directions)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, OrderedDict((k, v.astype(dtype)) for k, v in self.tensors.items()))

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, OrderedDict((k, v.copy()) for k, v in self.tensors.items()))


def param_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Names and shapes of every tensor, in checkpoint order."""
    N, L, H = config.N, config.L, config.hidden_size
    shapes = OrderedDict()
    shapes["enc_U"] = (N, L)
    shapes["enc_V"] = (N, L)
    shapes["ln_gain"] = (N,)
    shapes["ln_bias"] = (N,)
    n_in = N
    for layer in range(1, config.num_layers + 1):
        for d in config.directions:
            shapes[f"lstm{layer}.{d}.w_ih"] = (4 * H, n_in)
            shapes[f"lstm{layer}.{d}.w_hh"] = (4 * H, H)
            shapes[f"lstm{layer}.{d}.bias"] = (4 * H,)
        n_in = config.feature_size
    shapes["fc_w"] = (config.feature_size, config.C * N)
    shapes["fc_b"] = (config.C * N,)
    shapes["dec_B"] = (N, L)
    return shapes


def init_params(config: ModelConfig, seed: int | None = None, dtype=np.float32) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights, forget-gate bias 1, unit gain, zero biases."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.hidden_size
    tensors = OrderedDict()
    for name, shape in param_shapes(config).items():
        if name == "ln_gain":
            value = np.ones(shape)
        elif name in ("ln_bias", "fc_b"):
            value = np.zeros(shape)
        elif name.endswith(".bias"):
            value = np.zeros(shape)
            value[H : 2 * H] = 1.0
        else:
            fan_in = shape[0] if name in ("fc_w", "dec_B") else shape[1]
            bound = 1.0 / np.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        tensors[name] = value.astype(dtype)
    return ModelParams(config, tensors)


def bind(tape: Tape, params: ModelParams, check: bool = True) -> dict[str, Node]:
    """Place parameters on ``tape`` by reference (no copy)."""
    return {name: tape.variable(v, copy=False, check=check) for name, v in params.tensors.items()}


def check_finite(params: ModelParams) -> None:
    for name, v in params.tensors.items():
        if not np.all(np.isfinite(v)):
            raise ad.NonFiniteError(f"parameter {name!r} contains NaN or Inf")


# -- pipeline stages ---------------------------------------------------------------


def encode(segments: Node, U: Node, V: Node) -> Node:
    """Gated projection ``relu(x U^T) * sigmoid(x V^T)`` of each segment row."""
    if len(segments.shape) != 2 or U.shape != V.shape or segments.shape[1] != U.shape[1]:
        raise ShapeError("encode", segments.shape, U.shape, V.shape)
    gate = ad.relu(ad.matmul(segments, ad.transpose(U)))
    return ad.mul(gate, ad.sigmoid(ad.matmul(segments, ad.transpose(V))))


def normalize_weights(W: Node, gain: Node, bias: Node) -> Node:
    if W.shape[-1] < 2:
        raise ShapeError("normalize_weights (needs N >= 2)", W.shape)
    return ad.layer_norm(W, gain, bias, LN_EPS)


State = list  # per layer, per direction: (h, c) arrays of shape (B, H)


def separate(
    W_norm: Node,
    p: dict[str, Node],
    config: ModelConfig,
    initial_state: State | None = None,
) -> tuple[Node, State]:
    """Mask estimation for normalized weights of shape (B, K, N).

    Returns masks of shape (B, C, K, N) and the final recurrent state
    (one ``(h, c)`` pair per layer) for continuing a causal stream.
    """
    tape = W_norm.tape
    if len(W_norm.shape) != 3 or W_norm.shape[2] != config.N:
        raise ShapeError("separate", W_norm.shape, (None, None, config.N))
    batch, k_steps, _ = W_norm.shape
    if k_steps < 1:
        raise ValueError("separate needs at least one segment")
    if initial_state and config.bidirectional:
        raise ValueError("bidirectional separator cannot continue from a stream state")
    H = config.hidden_size

    x = ad.transpose(W_norm, (1, 0, 2))  # (K, B, N)
    outputs: list[Node] = []
    final_state: State = []
    for layer in range(1, config.num_layers + 1):
        dirs = []
        for d in config.directions:
            pre = f"lstm{layer}.{d}"
            cell = LstmCellParams(p[pre + ".w_ih"], p[pre + ".w_hh"], p[pre + ".bias"])
            if initial_state:
                h0, c0 = (tape.constant(s) for s in initial_state[layer - 1])
            else:
                h0 = tape.constant(np.zeros((batch, H)))
                c0 = tape.constant(np.zeros((batch, H)))
            seq, h_last, c_last = ad.lstm_layer(x, h0, c0, cell, reverse=(d == "bw"))
            dirs.append(seq)
            final_state.append((h_last.value.copy(), c_last.value.copy()))
        y = dirs[0] if len(dirs) == 1 else ad.concat(dirs, axis=2)
        if config.skip == "every_pair" and layer >= 4 and layer % 2 == 0:
            y = ad.add(y, outputs[layer - 3])
        outputs.append(y)
        x = y
    if config.skip == "second_to_last" and config.num_layers >= 3:
        x = ad.add(x, outputs[1])

    feats = ad.reshape(ad.transpose(x, (1, 0, 2)), (batch * k_steps, config.feature_size))
    logits = ad.add_rowvec(ad.matmul(feats, p["fc_w"]), p["fc_b"])
    logits = ad.transpose(ad.reshape(logits, (batch, k_steps, config.C, config.N)), (0, 2, 1, 3))
    return ad.softmax(logits, axis=1), final_state


def apply_masks(W: Node, M: Node) -> Node:
    """Source weights ``D_i = W * M_i``; W is (B, K, N), M is (B, C, K, N)."""
    if len(M.shape) != 4 or M.shape[:1] + M.shape[2:] != W.shape:
        raise ShapeError("apply_masks", W.shape, M.shape)
    return ad.mul(ad.stack([W] * M.shape[1], axis=1), M)


def decode(D: Node, basis: Node, scales: np.ndarray, pad_len: int) -> Node:
    """Synthesize (B, C, T) waveforms from source weights (B, C, K, N).

    Each segment is ``D[b, i, k] @ basis`` times the stored mixture scale
    ``scales[b, k]``; the trailing ``pad_len`` samples are dropped.
    """
    tape = D.tape
    batch, c, k_steps, n = D.shape
    L = basis.shape[1]
    if basis.shape[0] != n:
        raise ShapeError("decode", D.shape, basis.shape)
    scales = np.asarray(scales).reshape(batch, k_steps) if np.ndim(scales) else np.full((batch, k_steps), scales)
    if not 0 <= pad_len < L:
        raise ValueError(f"pad_len must lie in [0, L={L}), got {pad_len}")
    seg = ad.reshape(ad.matmul(ad.reshape(D, (batch * c * k_steps, n)), basis), (batch, c, k_steps, L))
    gain = np.broadcast_to(scales[:, None, :, None], (batch, c, k_steps, L))
    seg = ad.mul(seg, tape.constant(gain))
    wave = ad.reshape(seg, (batch, c, k_steps * L))
    if pad_len:
        wave = ad.slice_(wave, np.s_[:, :, : k_steps * L - pad_len])
    return wave


@dataclass
class ForwardResult:
    estimates: Node  # (B, C, T)
    weights: Node  # (B, K, N)
    masks: Node  # (B, C, K, N)
    source_weights: Node  # (B, C, K, N)
    final_state: State


def prepare_segments(x: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Frame and unit-normalize a batch of waveforms (B, T) in float64."""
    frames, pad = frame(np.asarray(x, dtype=np.float64), L)
    rows, scales = unit_normalize(frames)
    return rows, scales, pad


def forward_batch(
    tape: Tape,
    x: np.ndarray,
    p: dict[str, Node],
    config: ModelConfig,
    initial_state: State | None = None,
) -> ForwardResult:
    """Run the whole pipeline on equal-length waveforms ``x`` of shape (B, T)."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError("forward_batch", x.shape)
    batch = x.shape[0]
    rows, scales, pad = prepare_segments(x, config.L)
    k_steps = rows.shape[1]
    segs = tape.constant(rows.reshape(batch * k_steps, config.L))
    W_flat = encode(segs, p["enc_U"], p["enc_V"])
    W_norm = normalize_weights(W_flat, p["ln_gain"], p["ln_bias"])
    W = ad.reshape(W_flat, (batch, k_steps, config.N))
    M, state = separate(ad.reshape(W_norm, (batch, k_steps, config.N)), p, config, initial_state)
    D = apply_masks(W, M)
    est = decode(D, p["dec_B"], scales, pad)
    return ForwardResult(est, W, M, D, state)


def forward_utterance(x, params: ModelParams, config: ModelConfig | None = None) -> np.ndarray:
    """Separate one waveform; returns (C, len(x)) estimates."""
    config = config or params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"expected a non-empty mono waveform, got shape {x.shape}")
    tape = Tape(params.dtype, record=False)
    res = forward_batch(tape, x[None], bind(tape, params), config)
    return res.estimates.value[0]


def reconstruct_mixture(x, params: ModelParams) -> np.ndarray:
    """Autoencoder reconstruction ``decode(W)`` of the mixture with no masking."""
    config = params.config
    tape = Tape(params.dtype, record=False)
    p = bind(tape, params)
    rows, scales, pad = prepare_segments(np.asarray(x, dtype=np.float64)[None], config.L)
    k = rows.shape[1]
    W = encode(tape.constant(rows.reshape(k, config.L)), p["enc_U"], p["enc_V"])
    D = ad.reshape(W, (1, 1, k, config.N))
    return decode(D, p["dec_B"], scales, pad).value[0, 0]


def count_parameters(params: ModelParams) -> int:
    return int(sum(v.size for v in params.tensors.values()))


def check_shapes(params: ModelParams) -> None:
    expected = param_shapes(params.config)
    if list(expected) != list(params.tensors):
        raise ValueError("parameter names do not match the configuration")
    for name, shape in expected.items():
        if params.tensors[name].shape != shape:
            raise ShapeError(f"parameter {name}", params.tensors[name].shape, shape)
