"""Adam optimization with plateau LR halving, early stopping and a length curriculum."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Tape
from .model import ModelParams, bind, forward_batch
from .objective import pit_loss_batch, si_snr

log = logging.getLogger(__name__)

Dataset = Sequence[tuple[np.ndarray, np.ndarray]]  # (mixture (T,), sources (C, T))
LOG_COLUMNS = ("epoch", "step", "lr", "train_loss", "valid_loss", "si_snri_valid")


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_initial: float = 3e-4
    lr_halve_patience: int = 3
    early_stop_patience: int = 10
    curriculum: tuple[float, ...] = (0.5, 4.0)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float | None = 5.0
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.lr_halve_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if list(self.curriculum) != sorted(self.curriculum):
            raise ValueError("curriculum stages must have increasing durations")

    @classmethod
    def for_model(cls, bidirectional: bool, **overrides) -> "TrainConfig":
        kw = {"lr_initial": 1e-3 if bidirectional else 3e-4}
        kw.update(overrides)
        return cls(**kw)


@dataclass
class TrainState:
    current_lr: float
    epoch: int = 0
    step: int = 0
    best_valid_loss: float = math.inf
    epochs_since_improvement: int = 0
    epochs_since_halving: int = 0
    halvings: int = 0
    stage: int = 0  # curriculum stage in progress
    stage_epochs: int = 0  # epochs completed within that stage
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @classmethod
    def fresh(cls, params: ModelParams, config: TrainConfig) -> "TrainState":
        return cls(
            current_lr=config.lr_initial,
            m={k: np.zeros_like(p) for k, p in params.tensors.items()},
            v={k: np.zeros_like(p) for k, p in params.tensors.items()},
            rng=np.random.default_rng(config.seed),
        )

    def reset_schedule(self, config: TrainConfig) -> None:
        self.current_lr = config.lr_initial
        self.best_valid_loss = math.inf
        self.epochs_since_improvement = 0
        self.epochs_since_halving = 0
        self.halvings = 0


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: TrainState, config: TrainConfig) -> None:
    """Bias-corrected Adam update of ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r} at step {state.step}")
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1 - b1**t, 1 - b2**t
    for name, p in params.tensors.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        update = state.current_lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        p -= update.astype(p.dtype, copy=False)
    state.step = t


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


def _length_groups(items: Dataset, indices: Sequence[int]) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(items[i][0].shape[-1], []).append(i)
    return list(groups.values())


def batch_gradients(params: ModelParams, items: Dataset, indices: Sequence[int]) -> tuple[float, dict[str, np.ndarray]]:
    """Mean PIT loss over ``indices`` and its gradient.

    Utterances of equal length share one tape; groups are reduced in a fixed
    order so the result does not depend on scheduling.
    """
    total = len(indices)
    loss_sum = 0.0
    grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    for group in _length_groups(items, indices):
        tape = Tape(params.dtype)
        bound = bind(tape, params)
        x = np.stack([items[i][0] for i in group])
        refs = np.stack([items[i][1] for i in group])
        res = forward_batch(tape, x, bound, params.config)
        loss, _ = pit_loss_batch(res.estimates, refs)
        gr = tape.backward(loss)
        w = len(group) / total
        loss_sum += float(loss.value) * w
        for k in grads:
            grads[k] += gr[bound[k]] * w
    return loss_sum, grads


def run_epoch(params: ModelParams, dataset: Dataset, config: TrainConfig, state: TrainState) -> float:
    """One shuffled pass with one Adam step per batch; returns the mean training loss."""
    if len(dataset) == 0:
        raise ValueError("empty training set")
    order = state.rng.permutation(len(dataset))
    weighted = 0.0
    for start in range(0, len(order), config.batch_size):
        idx = [int(i) for i in order[start : start + config.batch_size]]
        loss, grads = batch_gradients(params, dataset, idx)
        clip_global_norm(grads, config.grad_clip)
        adam_step(params, grads, state, config)
        weighted += loss * len(idx)
    state.epoch += 1
    return weighted / len(dataset)


def evaluate_loss(params: ModelParams, dataset: Dataset) -> tuple[float, float]:
    """Mean PIT loss and mean SI-SNRi (dB) over ``dataset`` without recording."""
    losses, improvements = [], []
    for group in _length_groups(dataset, range(len(dataset))):
        tape = Tape(params.dtype, record=False)
        x = np.stack([dataset[i][0] for i in group])
        refs = np.stack([dataset[i][1] for i in group])
        est = forward_batch(tape, x, bind(tape, params), params.config).estimates
        _, results = pit_loss_batch(est, refs)
        for j, (i, r) in enumerate(zip(group, results)):
            mix, src = dataset[i]
            losses.append(r.loss)
            baseline = np.mean([si_snr(mix, src[r.best_perm[c]]).value_db for c in range(len(r.best_perm))])
            improvements.append(-r.loss - baseline)
    return float(np.mean(losses)), float(np.mean(improvements))


@dataclass(frozen=True)
class ScheduleDecision:
    valid_loss: float
    improved: bool
    halve_lr: bool
    stop: bool


def schedule_update(state: TrainState, valid_loss: float, config: TrainConfig) -> ScheduleDecision:
    """Fold one validation loss into the plateau counters.

    Only a strictly lower loss counts as improvement.  The LR halves after
    ``lr_halve_patience`` consecutive non-improving epochs (then that counter
    restarts); ``stop`` is raised after ``early_stop_patience`` of them.
    """
    improved = valid_loss < state.best_valid_loss
    if improved:
        state.best_valid_loss = valid_loss
        state.epochs_since_improvement = 0
        state.epochs_since_halving = 0
    else:
        state.epochs_since_improvement += 1
        state.epochs_since_halving += 1
    halve = state.epochs_since_halving >= config.lr_halve_patience
    if halve:
        state.halvings += 1
        state.current_lr = config.lr_initial * 2.0 ** (-state.halvings)
        state.epochs_since_halving = 0
    stop = state.epochs_since_improvement >= config.early_stop_patience
    return ScheduleDecision(valid_loss, improved, halve, stop)


def validate_and_schedule(params: ModelParams, valid: Dataset, state: TrainState, config: TrainConfig):
    if len(valid) == 0:
        raise ValueError("empty validation set")
    loss, improvement = evaluate_loss(params, valid)
    return schedule_update(state, loss, config), improvement


def run_curriculum(
    params: ModelParams,
    stages: Sequence[tuple[Dataset, Dataset]],
    config: TrainConfig,
    state: TrainState | None = None,
    log_path=None,
    on_epoch=None,
) -> tuple[ModelParams, list[dict]]:
    """Train on each ``(train, valid)`` stage in turn until early stopping.

    Parameters and Adam moments carry over between stages; the learning rate
    and both patience counters restart.  ``on_epoch(params, state, row)`` is
    called after every epoch (checkpointing hook).  A ``state`` restored from
    a checkpoint resumes at the stage and epoch it recorded.
    """
    state = state or TrainState.fresh(params, config)
    history: list[dict] = []
    writer = None
    fh = None
    if log_path is not None:
        log_path = Path(log_path)
        resuming = state.epoch > 0 and log_path.exists()
        fh = open(log_path, "a" if resuming else "w", newline="")
        writer = csv.writer(fh)
        if not resuming:
            writer.writerow(LOG_COLUMNS)
    try:
        while state.stage < len(stages):
            stage = state.stage
            train, valid = stages[stage]
            if state.stage_epochs == 0:
                state.reset_schedule(config)
            while True:
                lr_used = state.current_lr
                train_loss = run_epoch(params, train, config, state)
                decision, improvement = validate_and_schedule(params, valid, state, config)
                state.stage_epochs += 1
                finished = decision.stop or state.stage_epochs >= config.max_epochs
                if finished:
                    state.stage, state.stage_epochs = stage + 1, 0
                row = {
                    "stage": stage,
                    "epoch": state.epoch,
                    "step": state.step,
                    "lr": lr_used,
                    "train_loss": train_loss,
                    "valid_loss": decision.valid_loss,
                    "si_snri_valid": improvement,
                }
                history.append(row)
                if writer:
                    writer.writerow([row[c] for c in LOG_COLUMNS])
                    fh.flush()
                log.info("stage %d epoch %d lr %.3g train %.4f valid %.4f", stage, state.epoch, lr_used, train_loss, decision.valid_loss)
                if on_epoch:
                    on_epoch(params, state, row)
                if finished:
                    break
    finally:
        if fh:
            fh.close()
    return params, history
