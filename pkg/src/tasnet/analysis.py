"""Basis-signal spectra and separation-quality evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data.manifest import DatasetManifest, load_dataset
from .model import ModelParams, forward_utterance
from .objective import pit_loss, si_snr


@dataclass
class BasisSpectrumTable:
    """Magnitude responses of the decoder basis, one row per basis signal.

    ``order`` lists basis indices sorted by (center bin, index);
    ``magnitude[r]`` and ``center[r]`` belong to basis ``order[r]``.
    """

    order: np.ndarray
    center: np.ndarray
    magnitude: np.ndarray  # (N, L // 2 + 1)
    sample_rate: int = 8000

    def center_hz(self, L: int) -> np.ndarray:
        return self.center * self.sample_rate / L

    def fraction_below(self, hz: float, L: int) -> float:
        return float(np.mean(self.center_hz(L) < hz))

    def rows(self):
        for idx, c, mag in zip(self.order, self.center, self.magnitude):
            yield int(idx), int(c), mag


def basis_spectra(B, sample_rate: int = 8000) -> BasisSpectrumTable:
    """One-sided DFT magnitude of every basis row, sorted by peak bin."""
    B = np.asarray(B, dtype=np.float64)
    mag = np.abs(np.fft.rfft(B, axis=1))
    center = np.argmax(mag, axis=1)  # first maximum on ties
    order = np.lexsort((np.arange(B.shape[0]), center))
    return BasisSpectrumTable(order, center[order], mag[order], sample_rate)


def write_basis_csv(path, table: BasisSpectrumTable, L: int) -> None:
    F = table.magnitude.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "center_bin", "center_hz"] + [f"bin{f}" for f in range(F)])
        for idx, c, mag in table.rows():
            w.writerow([idx, c, repr(c * table.sample_rate / L)] + [repr(float(m)) for m in mag])


@dataclass
class EvalRow:
    utterance: int
    mixture: str
    si_snr_db: float
    si_snri_db: float
    perm: tuple[int, ...]


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    model_id: str = ""
    dataset_id: str = ""

    @property
    def mean_si_snr(self) -> float:
        return float(np.mean([r.si_snr_db for r in self.rows]))

    @property
    def mean_si_snri(self) -> float:
        return float(np.mean([r.si_snri_db for r in self.rows]))

    @property
    def median_si_snri(self) -> float:
        return float(np.median([r.si_snri_db for r in self.rows]))


EVAL_COLUMNS = ("utterance", "mixture", "si_snr_db", "si_snri_db", "perm")


def score_utterance(est, refs, mixture) -> tuple[float, float, tuple[int, ...]]:
    """Mean SI-SNR and SI-SNRi over sources under the best assignment."""
    res = pit_loss(est, refs)
    c = len(res.best_perm)
    baseline = float(np.mean([si_snr(mixture, refs[res.best_perm[i]]).value_db for i in range(c)]))
    quality = -res.loss
    return quality, quality - baseline, res.best_perm


def evaluate(params: ModelParams, manifest: DatasetManifest, separator=None,
             model_id: str = "", dataset_id: str = "") -> EvalReport:
    """Score every manifest utterance.  ``separator(mixture) -> (C, T)`` defaults to the model."""
    if params is not None and params.config.C != 2:
        raise ValueError(f"manifest holds 2 sources but the model separates {params.config.C}")
    items = load_dataset(manifest)
    sep = separator or (lambda x: forward_utterance(x, params))
    report = EvalReport(model_id=model_id, dataset_id=dataset_id)
    for i, (entry, (mix, refs)) in enumerate(zip(manifest.entries, items)):
        q, qi, perm = score_utterance(sep(mix), refs, mix)
        report.rows.append(EvalRow(i, str(entry.mixture), q, qi, perm))
    return report


def write_eval_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_COLUMNS)
        for r in report.rows:
            w.writerow([r.utterance, r.mixture, repr(r.si_snr_db), repr(r.si_snri_db), " ".join(map(str, r.perm))])


def read_eval_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
