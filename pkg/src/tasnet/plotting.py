"""Figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 150,
}


def plot_basis_spectra(table, L: int, path) -> None:
    """Sorted basis magnitude responses as an image (basis rank vs frequency)."""
    mag = table.magnitude
    peak = mag.max(axis=1, keepdims=True)
    norm = mag / np.where(peak > 0, peak, 1.0)
    nyquist = table.sample_rate / 2
    half_bin = table.sample_rate / L / 2  # rows are centered on their bin frequency
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        im = ax.imshow(norm.T, origin="lower", aspect="auto", cmap="magma",
                       extent=(0, mag.shape[0], -half_bin, nyquist + half_bin))
        ax.set_ylim(0, nyquist)
        ax.set_xlabel("basis (sorted by center frequency)")
        ax.set_ylabel("frequency (Hz)")
        below = table.fraction_below(1000.0, L)
        ax.set_title(f"{below:.0%} of centers below 1 kHz", fontsize=9)
        fig.colorbar(im, ax=ax, label="normalized magnitude")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_latency(timings_ms, T_i: float, path) -> None:
    """Histogram of per-segment processing times against the segment duration."""
    t = np.asarray(timings_ms, dtype=float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        if t.size:
            ax.hist(t, bins=min(40, max(5, t.size // 5)), color="0.4")
            ax.axvline(t.mean(), color="C0", label=f"mean T_p = {t.mean():.3f} ms")
        ax.axvline(T_i, color="C3", ls="--", label=f"T_i = {T_i:.3f} ms")
        ax.set_xlabel("per-segment processing time (ms)")
        ax.set_ylabel("segments")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_training_curve(history: list[dict], path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        epochs = [r["epoch"] for r in history]
        ax.plot(epochs, [r["train_loss"] for r in history], label="train")
        ax.plot(epochs, [r["valid_loss"] for r in history], label="valid")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss (-SI-SNR, dB)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
