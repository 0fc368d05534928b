"""Scale-invariant SNR, permutation-invariant loss and SI-SNR improvement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Node, ShapeError, Tape, reshape, scale, stack, sum_all, take

EPS = 1e-8
_DB = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class SiSnrValue:
    value_db: float
    clamped: bool


@dataclass(frozen=True)
class PitResult:
    loss: float
    best_perm: tuple[int, ...]
    per_source_si_snr: tuple[float, ...]


def _check_refs(ref: np.ndarray) -> None:
    if ref.shape[-1] < 2:
        raise ValueError("si_snr needs signals of length >= 2")
    flat = ref.reshape(-1, ref.shape[-1])
    if np.any(np.ptp(flat, axis=-1) == 0):
        raise ValueError("reference has no signal")


def _si_snr_forward(est: np.ndarray, ref: np.ndarray, eps: float):
    e0 = est - est.mean(axis=-1, keepdims=True)
    s0 = ref - ref.mean(axis=-1, keepdims=True)
    ref_energy = np.sum(s0 * s0, axis=-1, keepdims=True)
    alpha = np.sum(e0 * s0, axis=-1, keepdims=True) / ref_energy
    target = alpha * s0
    noise = e0 - target
    p_target = np.sum(target * target, axis=-1)
    p_noise = np.sum(noise * noise, axis=-1)
    # flooring (rather than adding) eps keeps the ratio exactly scale invariant
    # until a power actually drops below eps
    value = _DB * (np.log(np.maximum(p_target, eps)) - np.log(np.maximum(p_noise, eps)))
    return value, target, noise, p_target, p_noise


def si_snr(est, ref, eps: float = EPS) -> SiSnrValue:
    """SI-SNR in dB of a single estimate against its reference."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeError("si_snr", est.shape, ref.shape)
    _check_refs(ref)
    value, _, _, p_target, p_noise = _si_snr_forward(est, ref, eps)
    return SiSnrValue(float(value), bool(p_noise < eps or p_target < eps))


def si_snr_rows(est: Node, ref: np.ndarray, eps: float = EPS) -> Node:
    """Tape op: SI-SNR (dB) of every row of ``est`` (R, T) against ``ref`` (R, T).

    The reference is data, so only ``est`` receives a gradient.
    """
    tape = est.tape
    ref = np.asarray(ref, dtype=tape.dtype)
    if est.shape != ref.shape or len(est.shape) != 2:
        raise ShapeError("si_snr_rows", est.shape, ref.shape)
    _check_refs(ref)
    value, target, noise, p_target, p_noise = _si_snr_forward(est.value, ref, eps)

    def vjp(g):
        (gv,) = g
        coef = (_DB * gv)[:, None]
        wt = np.where(p_target < eps, 0.0, 2 / np.maximum(p_target, eps))[:, None]
        wn = np.where(p_noise < eps, 0.0, 2 / np.maximum(p_noise, eps))[:, None]
        d = coef * (wt * target - wn * noise)
        return (d - d.mean(axis=-1, keepdims=True),)

    return tape.push("si_snr", (est,), (value,), vjp)[0]


def _best_assignment(pair_db: np.ndarray) -> tuple[tuple[int, ...], float]:
    """pair_db[i, j] = SI-SNR of estimate i against reference j."""
    c = pair_db.shape[0]
    best, best_mean = None, -math.inf
    for perm in itertools.permutations(range(c)):
        m = float(np.mean([pair_db[i, perm[i]] for i in range(c)]))
        if m > best_mean:
            best, best_mean = perm, m
    return best, best_mean


def pit_loss_batch(est: Node, ref: np.ndarray, eps: float = EPS) -> tuple[Node, list[PitResult]]:
    """Tape op composition for a batch: ``est`` (B, C, T) vs ``ref`` (B, C, T).

    Returns the batch-mean loss node (mean over utterances of the negative
    mean SI-SNR under each utterance's best assignment) and one
    :class:`PitResult` per utterance.  Gradients flow only through the chosen
    assignment.
    """
    ref = np.asarray(ref)
    if len(est.shape) != 3 or est.shape != ref.shape:
        raise ShapeError("pit_loss", est.shape, ref.shape)
    b, c, t = est.shape
    # pairs[b, i, j] = (est[b, i], ref[b, j])
    est_pairs = reshape(stack([est] * c, axis=2), (b * c * c, t))
    ref_pairs = np.broadcast_to(ref[:, None, :, :], (b, c, c, t)).reshape(b * c * c, t)
    pair_db = si_snr_rows(est_pairs, ref_pairs, eps)
    table = pair_db.value.reshape(b, c, c).astype(np.float64)

    picks, results = [], []
    for u in range(b):
        perm, best_mean = _best_assignment(table[u])
        per_source = tuple(float(table[u, i, perm[i]]) for i in range(c))
        results.append(PitResult(-best_mean, perm, per_source))
        picks.extend(u * c * c + i * c + perm[i] for i in range(c))
    loss = scale(sum_all(take(pair_db, picks)), -1.0 / (b * c))
    return loss, results


def pit_loss(est, ref, eps: float = EPS) -> PitResult:
    """Permutation-invariant SI-SNR for one utterance: ``est``/``ref`` of shape (C, T)."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.ndim != 2 or est.shape != ref.shape:
        raise ShapeError("pit_loss", est.shape, ref.shape)
    tape = Tape(np.float64, record=False)
    _, results = pit_loss_batch(tape.variable(est[None]), ref[None], eps)
    return results[0]


def si_snri(est, ref, mixture, eps: float = EPS) -> float:
    """SI-SNR improvement of ``est`` over the unprocessed ``mixture``."""
    est = np.asarray(est, dtype=np.float64)
    mixture = np.asarray(mixture, dtype=np.float64)
    if est.shape != mixture.shape:
        raise ShapeError("si_snri", est.shape, mixture.shape)
    return si_snr(est, ref, eps).value_db - si_snr(mixture, ref, eps).value_db
