import hashlib
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tasnet.data import (
    HIGH_VOICE,
    LOW_VOICE,
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    MixtureSpec,
    SourceSpec,
    WavFormatError,
    desegment,
    generate_split,
    load_dataset,
    power,
    quantize,
    read_manifest,
    segment,
    synth_batch,
    synth_mixture,
    wav_read,
    wav_write,
    write_manifest,
)

# Produced once by scipy.io.wavfile.write(8000, int16 tone) for
# (0.5 * sin(2*pi*440*t) * 32767).astype(int16), t = arange(8000) / 8000.
REFERENCE_HEADER = bytes.fromhex(
    "52494646a43e000057415645666d74201000000001000100401f0000803e00000200100064617461803e0000"
)
REFERENCE_SHA256 = "727a6d42005654263499410b7a977f224d863751a48c127688142da076d5fafe"


class TestSegment:
    def test_counts(self):
        s = segment(np.ones(100), 40)
        assert (s.num_segments, s.pad_len) == (3, 20)
        s = segment(np.arange(1.0, 41.0), 40)
        assert (s.num_segments, s.pad_len) == (1, 0)
        assert s.scales[0] == pytest.approx(np.linalg.norm(np.arange(1.0, 41.0)))

    def test_hand_oracle(self):
        s = segment([3.0, 4.0], 2)
        np.testing.assert_allclose(s.segments, [[0.6, 0.8]], rtol=1e-15)
        assert s.scales[0] == 5.0

    def test_zero_energy_guard(self):
        s = segment(np.concatenate([np.zeros(4), [1e-10, 0, 0, 0], [1.0, 0, 0, 0]]), 4)
        np.testing.assert_array_equal(s.scales[:2], [0.0, 0.0])
        assert not s.segments[:2].any()
        np.testing.assert_array_equal(desegment(s), np.r_[np.zeros(8), 1.0, 0, 0, 0])

    @pytest.mark.parametrize("n", [1, 39, 40, 41, 1000])
    def test_round_trip_examples(self, n, rng):
        x = rng.standard_normal(n)
        np.testing.assert_allclose(desegment(segment(x, 40)), x, rtol=1e-6)

    def test_zero_round_trip(self):
        np.testing.assert_array_equal(desegment(segment(np.zeros(77), 40)), np.zeros(77))

    @settings(max_examples=1000)
    @given(st.integers(1, 5000), st.integers(1, 64))
    def test_length_preserved(self, n, L):
        s = segment(np.ones(n), L)
        assert 0 <= s.pad_len < L and s.length == n and desegment(s).size == n

    @given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.integers(1, 50))
    def test_round_trip_float32(self, seed, n, L):
        x = np.random.default_rng(seed).standard_normal(n).astype(np.float32)
        y = desegment(segment(x, L, dtype=np.float32))
        np.testing.assert_allclose(y, x, rtol=1e-6, atol=1e-7)
        rows = segment(x, L).segments
        live = segment(x, L).scales > 0
        np.testing.assert_allclose(np.linalg.norm(rows[live], axis=1), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("L", [0, -3])
    def test_bad_length(self, L):
        with pytest.raises(ValueError):
            segment(np.ones(5), L)

    def test_empty(self):
        with pytest.raises(ValueError):
            segment(np.zeros(0), 4)


class TestWav:
    def test_header_matches_reference_tool(self, tmp_path):
        t = np.arange(8000) / 8000
        tone = (0.5 * np.sin(2 * np.pi * 440 * t) * 32767).astype(np.int16)
        path = tmp_path / "tone.wav"
        wav_write(path, tone / 32768.0)
        data = path.read_bytes()
        assert data[:44] == REFERENCE_HEADER
        assert hashlib.sha256(data).hexdigest() == REFERENCE_SHA256
        channels, rate, _, _, bits = struct.unpack("<HIIHH", data[22:36])
        assert (channels, rate, bits) == (1, 8000, 16)

    def test_round_trip_bound(self, tmp_path, rng):
        x = rng.uniform(-1, 1, 1000)
        wav_write(tmp_path / "x.wav", x)
        y, rate = wav_read(tmp_path / "x.wav")
        assert rate == 8000
        assert np.max(np.abs(x - y)) <= 1 / 32768

    def test_silence_exact(self, tmp_path):
        wav_write(tmp_path / "z.wav", np.zeros(50))
        np.testing.assert_array_equal(wav_read(tmp_path / "z.wav")[0], np.zeros(50))

    def test_quantize_clips_and_rounds_half_away(self):
        q = quantize(np.array([2.0, -2.0, 0.5 / 32768, -0.5 / 32768, 1.5 / 32768]))
        np.testing.assert_array_equal(q, [32767, -32768, 1, -1, 2])

    def test_rate_mismatch(self, tmp_path):
        wav_write(tmp_path / "r.wav", np.zeros(10), rate=16000)
        with pytest.raises(WavFormatError, match="16000"):
            wav_read(tmp_path / "r.wav")
        assert wav_read(tmp_path / "r.wav", expected_rate=None)[1] == 16000

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "st.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(2)
            w.setsampwidth(2)
            w.setframerate(8000)
            w.writeframes(b"\x00" * 16)
        with pytest.raises(WavFormatError, match="mono"):
            wav_read(path)

    def test_8bit_rejected(self, tmp_path):
        path = tmp_path / "b8.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(1)
            w.setframerate(8000)
            w.writeframes(b"\x80" * 8)
        with pytest.raises(WavFormatError):
            wav_read(path)

    def test_not_a_wav(self, tmp_path):
        (tmp_path / "junk.wav").write_bytes(b"not audio at all")
        with pytest.raises(WavFormatError):
            wav_read(tmp_path / "junk.wav")


class TestSynth:
    def _snr(self, s1, s2):
        return 10 * np.log10(power(s1) / power(s2))

    @pytest.mark.parametrize("snr", [0.0, 2.5, 5.0])
    def test_snr_and_sum(self, snr):
        mix, s1, s2 = synth_mixture(MixtureSpec(snr_db=snr, seed=7))
        assert abs(self._snr(s1, s2) - snr) <= 0.01
        assert np.array_equal(mix - (s1 + s2), np.zeros_like(mix))
        assert np.max(np.abs(mix)) <= 1.0

    def test_deterministic(self):
        a = synth_mixture(MixtureSpec(snr_db=3.0, seed=11))
        b = synth_mixture(MixtureSpec(snr_db=3.0, seed=11))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = synth_mixture(MixtureSpec(snr_db=3.0, seed=12))
        assert not np.array_equal(a[0], c[0])

    def test_sources_are_spectrally_disjoint(self):
        _, s1, s2 = synth_mixture(MixtureSpec(duration_s=1.0, seed=3))
        freqs = np.fft.rfftfreq(8000, 1 / 8000)
        e1, e2 = np.abs(np.fft.rfft(s1)) ** 2, np.abs(np.fft.rfft(s2)) ** 2
        assert e1[freqs < 1100].sum() / e1.sum() > 0.99
        assert e2[freqs > 1400].sum() / e2.sum() > 0.99

    def test_noise_source(self):
        spec = MixtureSpec(sources=(LOW_VOICE, SourceSpec("noise", band=(2000.0, 3500.0))), seed=1)
        _, _, s2 = synth_mixture(spec)
        assert power(s2) > 0

    @pytest.mark.parametrize("kw", [
        {"snr_db": -1.0},
        {"snr_db": 5.5},
        {"sources": (LOW_VOICE, LOW_VOICE)},
        {"sources": (LOW_VOICE, SourceSpec("harmonic", (150.0, 200.0), (1500.0, 3000.0)))},
    ])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            MixtureSpec(**kw)

    def test_batch_snrs_in_range(self):
        items = synth_batch(10, 0.25, seed=2)
        assert len(items) == 10
        for mix, s1, s2 in items:
            assert mix.size == 2000
            assert -0.01 <= self._snr(s1, s2) <= 5.01

    def test_stored_source(self, tmp_path):
        path = tmp_path / "src.wav"
        t = np.arange(4000) / 8000
        wav_write(path, 0.3 * np.sin(2 * np.pi * 300 * t))
        spec = MixtureSpec(sources=(SourceSpec("stored", path=str(path)), HIGH_VOICE), duration_s=0.25, seed=0)
        _, s1, _ = synth_mixture(spec)
        assert s1.size == 2000 and power(s1) > 0

    def test_silent_stored_source_fails(self, tmp_path):
        path = tmp_path / "silent.wav"
        wav_write(path, np.zeros(2000))
        spec = MixtureSpec(sources=(SourceSpec("stored", path=str(path)), HIGH_VOICE), duration_s=0.25)
        with pytest.raises(RuntimeError, match="zero power"):
            synth_mixture(spec)


class TestManifest:
    def test_generate_and_load(self, tmp_path):
        path = generate_split(tmp_path, "valid", 3, 0.25, seed=5)
        manifest = read_manifest(path)
        assert manifest.split == "valid" and manifest.seed == 5 and len(manifest.entries) == 3
        assert manifest.entries[0].duration_s == pytest.approx(0.25)
        items = load_dataset(manifest)
        mix, src = items[0]
        assert src.shape == (2, mix.size)
        assert np.max(np.abs(mix - src.sum(axis=0))) <= 3 / 32768
        assert "seed = 5" in (tmp_path / "generator.txt").read_text()

    def test_generation_is_deterministic(self, tmp_path):
        a = generate_split(tmp_path / "a", "train", 2, 0.1, seed=9)
        b = generate_split(tmp_path / "b", "train", 2, 0.1, seed=9)
        for name in ("train_0000_mix.wav", "train_0001_s2.wav"):
            assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()

    def test_round_trip(self, tmp_path):
        m = DatasetManifest([ManifestEntry(tmp_path / "m.wav", (tmp_path / "a.wav", tmp_path / "b.wav"), 1.5)],
                            split="test", seed=3)
        write_manifest(tmp_path / "x.tsv", m)
        back = read_manifest(tmp_path / "x.tsv")
        assert back.entries[0].mixture == tmp_path / "m.wav"
        assert back.entries[0].duration_s == 1.5 and back.split == "test"

    def test_missing_files_listed(self, tmp_path):
        path = generate_split(tmp_path, "test", 2, 0.1, seed=1)
        (tmp_path / "test_0000_s1.wav").unlink()
        (tmp_path / "test_0001_mix.wav").unlink()
        with pytest.raises(ManifestError) as info:
            load_dataset(read_manifest(path))
        assert "test_0000_s1.wav" in str(info.value) and "test_0001_mix.wav" in str(info.value)

    def test_malformed_line(self, tmp_path):
        (tmp_path / "bad.tsv").write_text("a.wav\tb.wav\n")
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "bad.tsv")
