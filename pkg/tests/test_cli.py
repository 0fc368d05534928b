import csv
import subprocess
import sys

import numpy as np
import pytest

from tasnet import cli
from tasnet.checkpoint import load_checkpoint
from tasnet.data import wav_read, wav_write

TINY_CFG = """\
# toy model
L = 8
N = 16
num_layers = 2
hidden_size = 12
batch_size = 4
lr_initial = 0.002
max_epochs = 2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.cfg").write_text(TINY_CFG)
    assert cli.main(["gen-data", "--out", str(root / "d"), "--split", "train", "--count", "4",
                     "--duration", "0.2", "--seed", "1"]) == 0
    assert cli.main(["gen-data", "--out", str(root / "d"), "--split", "valid", "--count", "2",
                     "--duration", "0.2", "--seed", "2"]) == 0
    rc = cli.main(["train", "--config", str(root / "tiny.cfg"), "--train", str(root / "d/train.tsv"),
                   "--valid", str(root / "d/valid.tsv"), "--checkpoint", str(root / "m.ck"), "--seed", "0"])
    assert rc == 0
    return root


def run(argv, capsys):
    rc = cli.main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


class TestUsage:
    def test_no_command(self, capsys):
        rc, _, err = run([], capsys)
        assert rc == 1 and "usage" in err

    def test_unknown_flag(self, capsys):
        rc, _, err = run(["basis", "--bogus"], capsys)
        assert rc == 1 and "usage" in err and "--bogus" in err

    def test_eval_without_checkpoint(self, capsys):
        rc, _, err = run(["eval", "--manifest", "x.tsv"], capsys)
        assert rc == 1 and "usage" in err and "--checkpoint" in err

    def test_help_exits_zero(self, capsys):
        rc, out, _ = run(["separate", "--help"], capsys)
        assert rc == 0 and "--stream" in out

    def test_unknown_config_key(self, tmp_path, capsys):
        (tmp_path / "c.cfg").write_text("hidden = 4\n")
        rc, _, err = run(["gen-data", "--out", str(tmp_path), "--config", str(tmp_path / "c.cfg")], capsys)
        assert rc == 1 and "hidden" in err

    def test_bad_checkpoint_is_user_error(self, tmp_path, capsys):
        (tmp_path / "bad.ck").write_bytes(b"garbage, not a model file")
        rc, _, err = run(["basis", "--checkpoint", str(tmp_path / "bad.ck")], capsys)
        assert rc == 1 and "not a checkpoint" in err

    def test_internal_error(self, monkeypatch, capsys, tmp_path):
        def boom(*a, **k):
            raise RuntimeError("kaboom")

        monkeypatch.setattr(cli, "generate_split", boom)
        rc, _, err = run(["gen-data", "--out", str(tmp_path)], capsys)
        assert rc == 2 and "kaboom" in err

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "tasnet", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.startswith("tasnet ")


class TestCommands:
    def test_train_outputs(self, workspace):
        params, state = load_checkpoint(workspace / "m.ck")
        assert params.config.hidden_size == 12 and state.epoch == 2
        with open(workspace / "m.log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["epoch"] for r in rows] == ["1", "2"]
        assert (workspace / "m.log.png").stat().st_size > 0

    def test_header_printed(self, workspace, capsys):
        rc, out, _ = run(["basis", "--checkpoint", str(workspace / "m.ck"), "--out", str(workspace / "h.csv"),
                          "--no-plot"], capsys)
        assert rc == 0
        assert out.startswith("# tasnet ") and "# hidden_size = 12" in out and "# seed = 0" in out

    def test_separate_writes_equal_length_sources(self, workspace, tmp_path, capsys):
        x = 0.2 * np.sin(np.arange(1234) / 5.0)
        wav_write(tmp_path / "in.wav", x)
        rc, _, _ = run(["separate", str(tmp_path / "in.wav"), "--checkpoint", str(workspace / "m.ck")], capsys)
        assert rc == 0
        for name in ("in.s1.wav", "in.s2.wav"):
            y, rate = wav_read(tmp_path / name)
            assert y.size == 1234 and rate == 8000

    def test_separate_stream_matches_offline(self, workspace, tmp_path, capsys):
        wav_write(tmp_path / "in.wav", 0.2 * np.sin(np.arange(999) / 3.0))
        ck = str(workspace / "m.ck")
        assert run(["separate", str(tmp_path / "in.wav"), "--checkpoint", ck, "--out-dir", str(tmp_path / "off")],
                   capsys)[0] == 0
        assert run(["separate", str(tmp_path / "in.wav"), "--checkpoint", ck, "--stream", "--chunk", "17",
                    "--out-dir", str(tmp_path / "on")], capsys)[0] == 0
        for name in ("in.s1.wav", "in.s2.wav"):
            a, b = wav_read(tmp_path / "off" / name)[0], wav_read(tmp_path / "on" / name)[0]
            assert np.max(np.abs(a - b)) <= 1 / 32768
        with open(tmp_path / "on" / "in.latency.csv") as fh:
            row = next(csv.DictReader(fh))
        assert float(row["T_i_ms"]) == 1.0 and int(row["segments"]) == 125

    def test_separate_missing_input(self, workspace, capsys):
        rc, _, err = run(["separate", "nope.wav", "--checkpoint", str(workspace / "m.ck")], capsys)
        assert rc == 1 and "nope.wav" in err

    def test_basis(self, workspace, tmp_path, capsys):
        rc, out, _ = run(["basis", "--checkpoint", str(workspace / "m.ck"), "--out", str(tmp_path / "b.csv")], capsys)
        assert rc == 0 and "below 1 kHz" in out
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert len(lines) == 1 + 16
        assert (tmp_path / "b.png").stat().st_size > 0

    def test_profile(self, workspace, tmp_path, capsys):
        rc, _, _ = run(["profile", "--checkpoint", str(workspace / "m.ck"), "--duration", "0.1",
                        "--out", str(tmp_path / "lat.csv")], capsys)
        assert rc == 0
        with open(tmp_path / "lat.csv") as fh:
            row = next(csv.DictReader(fh))
        assert float(row["T_tot_ms"]) == pytest.approx(float(row["T_i_ms"]) + float(row["T_p_mean_ms"]))
        assert (tmp_path / "lat.png").exists()

    def test_eval(self, workspace, tmp_path, capsys):
        rc, out, _ = run(["eval", "--checkpoint", str(workspace / "m.ck"), "--manifest",
                          str(workspace / "d/valid.tsv"), "--out", str(tmp_path / "e.csv")], capsys)
        assert rc == 0 and "mean SI-SNRi" in out
        assert len((tmp_path / "e.csv").read_text().splitlines()) == 3

    def test_eval_missing_files_listed(self, workspace, tmp_path, capsys):
        (tmp_path / "m.tsv").write_text(f"{tmp_path}/a.wav\t{tmp_path}/b.wav\t{tmp_path}/c.wav\t1.0\n")
        rc, out, err = run(["eval", "--checkpoint", str(workspace / "m.ck"), "--manifest", str(tmp_path / "m.tsv"),
                            "--out", str(tmp_path / "e.csv")], capsys)
        assert rc == 1 and "a.wav" in err and "c.wav" in err
        assert not (tmp_path / "e.csv").exists()


class TestReproducibility:
    def test_same_seed_same_files(self, workspace, tmp_path):
        outs = []
        for tag in ("a", "b"):
            d = tmp_path / tag
            assert cli.main(["gen-data", "--out", str(d), "--count", "4", "--duration", "0.2", "--seed", "1"]) == 0
            assert cli.main(["train", "--config", str(workspace / "tiny.cfg"), "--train", str(d / "train.tsv"),
                             "--valid", str(workspace / "d/valid.tsv"), "--checkpoint", str(d / "m.ck"),
                             "--no-plot"]) == 0
            assert cli.main(["basis", "--checkpoint", str(d / "m.ck"), "--out", str(d / "b.csv"), "--no-plot"]) == 0
            outs.append(d)
        for name in ("train_0003_mix.wav", "m.ck", "m.log.csv", "b.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        assert (outs[0] / "m.ck").read_bytes() == (workspace / "m.ck").read_bytes()

    def test_resume_continues_with_next_stage(self, workspace, tmp_path):
        import shutil

        shutil.copy(workspace / "m.ck", tmp_path / "m.ck")
        stage = ["--train", str(workspace / "d/train.tsv"), "--valid", str(workspace / "d/valid.tsv")]
        args = ["train", "--config", str(workspace / "tiny.cfg"), *stage, *stage,
                "--checkpoint", str(tmp_path / "m.ck"), "--resume", "--no-plot"]
        assert cli.main(args) == 0
        state = load_checkpoint(tmp_path / "m.ck")[1]
        assert (state.epoch, state.stage) == (4, 2)
        with open(tmp_path / "m.log.csv") as fh:
            assert [r["epoch"] for r in csv.DictReader(fh)] == ["3", "4"]
