import numpy as np

from tasnet.analysis import basis_spectra
from tasnet.plotting import plot_basis_spectra, plot_latency, plot_training_curve

PNG = b"\x89PNG\r\n\x1a\n"


def test_basis_figure(tmp_path, rng):
    plot_basis_spectra(basis_spectra(rng.standard_normal((10, 40))), 40, tmp_path / "b.png")
    assert (tmp_path / "b.png").read_bytes()[:8] == PNG


def test_latency_figure(tmp_path, rng):
    plot_latency(rng.uniform(0.1, 0.3, 50), 5.0, tmp_path / "l.png")
    plot_latency([], 5.0, tmp_path / "empty.png")
    assert (tmp_path / "l.png").read_bytes()[:8] == PNG
    assert (tmp_path / "empty.png").exists()


def test_training_figure(tmp_path):
    history = [{"epoch": e, "train_loss": 10.0 / e, "valid_loss": 12.0 / e} for e in range(1, 6)]
    plot_training_curve(history, tmp_path / "t.png")
    assert (tmp_path / "t.png").read_bytes()[:8] == PNG
