"""LSTM cell and fused sequence op.

Gate rows of the stacked weights are ordered input, forget, cell, output:

    z = x W_ih^T + h W_hh^T + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c' = f * c + i * g;  h' = o * tanh(c')

``lstm_layer`` runs the same cell over a whole sequence as a single tape
record and back-propagates through time in its vjp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import _sigmoid, _tape
from .tape import Node, ShapeError


@dataclass
class LstmCellParams:
    w_ih: Node  # (4H, N_in)
    w_hh: Node  # (4H, H)
    bias: Node  # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]

    def check(self) -> None:
        h = self.hidden_size
        if self.w_hh.shape != (4 * h, h) or self.w_ih.shape[0] != 4 * h or self.bias.shape != (4 * h,):
            raise ShapeError("lstm params", self.w_ih.shape, self.w_hh.shape, self.bias.shape)


def _gates(z: np.ndarray, h: int):
    i = _sigmoid(z[..., :h])
    f = _sigmoid(z[..., h : 2 * h])
    g = np.tanh(z[..., 2 * h : 3 * h])
    o = _sigmoid(z[..., 3 * h :])
    return i, f, g, o


def _gate_grads(dc, do, i, f, g, o, c_prev):
    return np.concatenate(
        [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dc * i * (1 - g * g), do * o * (1 - o)],
        axis=-1,
    )


def lstm_cell(x: Node, h_prev: Node, c_prev: Node, p: LstmCellParams) -> tuple[Node, Node]:
    """One LSTM step for a batch of rows; returns ``(h, c)``."""
    tape = _tape(x, h_prev, c_prev, p.w_ih, p.w_hh, p.bias)
    p.check()
    hs = p.hidden_size
    if (
        len(x.shape) != 2
        or x.shape[1] != p.input_size
        or h_prev.shape != (x.shape[0], hs)
        or c_prev.shape != h_prev.shape
    ):
        raise ShapeError("lstm_cell", x.shape, h_prev.shape, c_prev.shape, p.w_ih.shape)
    xv, hv, cv = x.value, h_prev.value, c_prev.value
    wih, whh = p.w_ih.value, p.w_hh.value
    z = xv @ wih.T + hv @ whh.T + p.bias.value
    i, f, g, o = _gates(z, hs)
    c = f * cv + i * g
    tc = np.tanh(c)
    h = o * tc

    def vjp(grads):
        gh, gc = grads
        do = gh * tc
        dc = gc + gh * o * (1 - tc * tc)
        dz = _gate_grads(dc, do, i, f, g, o, cv)
        return dz @ wih, dz @ whh, dc * f, dz.T @ xv, dz.T @ hv, dz.sum(axis=0)

    return tape.push("lstm_cell", (x, h_prev, c_prev, p.w_ih, p.w_hh, p.bias), (h, c), vjp)


def lstm_layer(
    x_seq: Node, h0: Node, c0: Node, p: LstmCellParams, reverse: bool = False
) -> tuple[Node, Node, Node]:
    """Run the cell over ``x_seq`` of shape (K, B, N_in).

    Returns ``(h_seq, h_last, c_last)`` with ``h_seq`` of shape (K, B, H).
    With ``reverse=True`` the recurrence runs from step K-1 down to 0 and
    ``h_seq`` stays aligned with the input steps.
    """
    tape = _tape(x_seq, h0, c0, p.w_ih, p.w_hh, p.bias)
    p.check()
    hs = p.hidden_size
    if len(x_seq.shape) != 3 or x_seq.shape[2] != p.input_size:
        raise ShapeError("lstm_layer", x_seq.shape, p.w_ih.shape)
    k_steps, batch, n_in = x_seq.shape
    if h0.shape != (batch, hs) or c0.shape != (batch, hs):
        raise ShapeError("lstm_layer state", h0.shape, c0.shape, (batch, hs))

    xv = x_seq.value
    wih, whh = p.w_ih.value, p.w_hh.value
    xz = (xv.reshape(k_steps * batch, n_in) @ wih.T + p.bias.value).reshape(k_steps, batch, 4 * hs)
    dt = tape.dtype
    gates = np.empty((k_steps, batch, 4 * hs), dtype=dt)  # post-activation i, f, g, o
    cs = np.empty((k_steps, batch, hs), dtype=dt)
    hs_out = np.empty((k_steps, batch, hs), dtype=dt)
    order = range(k_steps - 1, -1, -1) if reverse else range(k_steps)
    h, c = h0.value, c0.value
    for t in order:
        z = xz[t] + h @ whh.T
        i, f, g, o = _gates(z, hs)
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t] = np.concatenate([i, f, g, o], axis=-1)
        cs[t] = c
        hs_out[t] = h
    h_last, c_last = h, c
    h0v, c0v = h0.value, c0.value

    def vjp(grads):
        g_seq, g_hlast, g_clast = grads
        dz_all = np.empty_like(gates)
        h_prev_all = np.empty_like(hs_out)
        dh_next, dc_next = g_hlast, g_clast
        seq = list(order)
        for pos in range(k_steps - 1, -1, -1):
            t = seq[pos]
            if pos == 0:
                hp, cp = h0v, c0v
            else:
                hp, cp = hs_out[seq[pos - 1]], cs[seq[pos - 1]]
            i = gates[t, :, :hs]
            f = gates[t, :, hs : 2 * hs]
            g = gates[t, :, 2 * hs : 3 * hs]
            o = gates[t, :, 3 * hs :]
            tc = np.tanh(cs[t])
            gh = g_seq[t] + dh_next
            do = gh * tc
            dc = dc_next + gh * o * (1 - tc * tc)
            dz = _gate_grads(dc, do, i, f, g, o, cp)
            dz_all[t] = dz
            h_prev_all[t] = hp
            dh_next = dz @ whh
            dc_next = dc * f
        dz_flat = dz_all.reshape(k_steps * batch, 4 * hs)
        dx = (dz_flat @ wih).reshape(k_steps, batch, n_in)
        dwih = dz_flat.T @ xv.reshape(k_steps * batch, n_in)
        dwhh = dz_flat.T @ h_prev_all.reshape(k_steps * batch, hs)
        return dx, dh_next, dc_next, dwih, dwhh, dz_flat.sum(axis=0)

    return tape.push(
        "lstm_layer", (x_seq, h0, c0, p.w_ih, p.w_hh, p.bias), (hs_out, h_last, c_last), vjp
    )
