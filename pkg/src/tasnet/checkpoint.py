"""Versioned binary checkpoints.

Layout (little-endian)::

    magic "TASNETCK"  u32 version
    u32 L, N, C, num_layers, hidden_size   u8 bidirectional   u8 skip   i64 seed
    u32 n  + n bytes of JSON training metadata (empty when no optimizer state)
    u32 tensor count, then per tensor:
        u16 name length, name (utf-8), u8 ndim, ndim x u32 dims, float32 data

Optimizer moments are stored as tensors named ``adam.m/<param>`` and
``adam.v/<param>`` after the model tensors.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .model import SKIP_MODES, ModelConfig, ModelParams, check_shapes
from .training import TrainState

MAGIC = b"TASNETCK"
VERSION = 1
_HEADER = struct.Struct("<5IBBq")
_CONFIG_FIELDS = ("L", "N", "C", "num_layers", "hidden_size", "bidirectional", "skip", "seed")


class CheckpointError(ValueError):
    pass


def _write_tensor(buf: io.BytesIO, name: str, value: np.ndarray) -> None:
    raw = name.encode()
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<B", value.ndim))
    buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
    buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def encode_checkpoint(params: ModelParams, state: TrainState | None = None) -> bytes:
    cfg = params.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(
        _HEADER.pack(
            cfg.L, cfg.N, cfg.C, cfg.num_layers, cfg.hidden_size,
            int(cfg.bidirectional), SKIP_MODES.index(cfg.skip), cfg.seed,
        )
    )
    meta = b""
    if state is not None:
        meta = json.dumps(
            {
                "epoch": state.epoch,
                "step": state.step,
                "current_lr": state.current_lr,
                "best_valid_loss": state.best_valid_loss,
                "epochs_since_improvement": state.epochs_since_improvement,
                "epochs_since_halving": state.epochs_since_halving,
                "halvings": state.halvings,
                "stage": state.stage,
                "stage_epochs": state.stage_epochs,
                "rng": state.rng.bit_generator.state,
            }
        ).encode()
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    tensors = list(params.tensors.items())
    if state is not None:
        tensors += [(f"adam.m/{k}", state.m[k]) for k in params.tensors]
        tensors += [(f"adam.v/{k}", state.v[k]) for k in params.tensors]
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors:
        _write_tensor(buf, name, value)
    return buf.getvalue()


def save_checkpoint(path, params: ModelParams, state: TrainState | None = None) -> None:
    """Write atomically.  Values are stored as float32."""
    path = Path(path)
    data = encode_checkpoint(params, state)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def decode_checkpoint(data: bytes, expected: ModelConfig | None = None, path="<bytes>"):
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    L, N, C, layers, hidden, bidir, skip, seed = r.unpack(_HEADER.format)
    if skip >= len(SKIP_MODES):
        raise CheckpointError(f"{path}: unknown skip mode {skip}")
    config = ModelConfig(L=L, N=N, C=C, num_layers=layers, hidden_size=hidden,
                         bidirectional=bool(bidir), skip=SKIP_MODES[skip], seed=seed)
    if expected is not None:
        for f in _CONFIG_FIELDS:
            got, want = getattr(config, f), getattr(expected, f)
            if got != want:
                raise CheckpointError(f"{path}: config mismatch in field {f!r}: checkpoint has {got}, expected {want}")
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len)) if meta_len else None
    (count,) = r.unpack("<I")
    tensors = OrderedDict()
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor table")

    model = OrderedDict((k, v) for k, v in tensors.items() if not k.startswith("adam."))
    params = ModelParams(config, model)
    try:
        check_shapes(params)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None

    state = None
    if meta is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
        state = TrainState(
            current_lr=meta["current_lr"],
            epoch=meta["epoch"],
            step=meta["step"],
            best_valid_loss=meta["best_valid_loss"],
            epochs_since_improvement=meta["epochs_since_improvement"],
            epochs_since_halving=meta["epochs_since_halving"],
            halvings=meta["halvings"],
            stage=meta["stage"],
            stage_epochs=meta["stage_epochs"],
            m={k: tensors[f"adam.m/{k}"] for k in model},
            v={k: tensors[f"adam.v/{k}"] for k in model},
            rng=rng,
        )
    return params, state


def load_checkpoint(path, expected: ModelConfig | None = None):
    """Return ``(params, state)``; ``state`` is None for model-only checkpoints."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), expected, path)
