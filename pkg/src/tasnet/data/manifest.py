"""Dataset manifests and on-disk split generation.

A manifest is line-oriented text, one utterance per line::

    mix_path<TAB>s1_path<TAB>s2_path<TAB>duration_s

Lines starting with ``#`` carry ``key=value`` metadata (split, seed).
Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .synth import LOW_VOICE, HIGH_VOICE, synth_batch
from .wav import wav_read, wav_write


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    mixture: Path
    sources: tuple[Path, Path]
    duration_s: float


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    split: str = "train"
    seed: int = 0

    def missing_files(self) -> list[Path]:
        missing = []
        for e in self.entries:
            missing.extend(p for p in (e.mixture, *e.sources) if not p.exists())
        return missing


def write_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    lines = [f"# split={manifest.split}", f"# seed={manifest.seed}"]
    for e in manifest.entries:
        cols = [e.mixture, *e.sources]
        rel = [str(Path(c).relative_to(path.parent)) if Path(c).is_relative_to(path.parent) else str(c) for c in cols]
        lines.append("\t".join(rel + [f"{e.duration_s:.6f}"]))
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    meta: dict[str, str] = {}
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        mix, s1, s2 = (path.parent / c for c in cols[:3])
        try:
            duration = float(cols[3])
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad duration {cols[3]!r}") from None
        entries.append(ManifestEntry(mix, (s1, s2), duration))
    split = meta.get("split", "train")
    if split not in ("train", "valid", "test"):
        raise ManifestError(f"{path}: unknown split {split!r}")
    return DatasetManifest(entries, split, int(meta.get("seed", 0)))


def load_dataset(manifest: DatasetManifest, sample_rate: int = 8000):
    """Read every utterance as ``(mixture, sources[2, T])``.

    All missing files are reported together before anything is read.
    """
    missing = manifest.missing_files()
    if missing:
        listing = "\n  ".join(str(p) for p in missing)
        raise ManifestError(f"{len(missing)} file(s) missing:\n  {listing}")
    items = []
    for e in manifest.entries:
        mix, _ = wav_read(e.mixture, sample_rate)
        srcs = [wav_read(p, sample_rate)[0] for p in e.sources]
        if any(s.size != mix.size for s in srcs):
            raise ManifestError(f"{e.mixture}: source lengths differ from mixture")
        items.append((mix, np.stack(srcs)))
    return items


def generate_split(
    out_dir, split: str, count: int, duration_s: float, seed: int, sample_rate: int = 8000
) -> Path:
    """Synthesize ``count`` mixtures into ``out_dir``; returns the manifest path.

    The generator settings are recorded next to the manifest in
    ``generator.txt``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(split=split, seed=seed)
    for i, (mix, s1, s2) in enumerate(synth_batch(count, duration_s, seed, sample_rate)):
        paths = [out_dir / f"{split}_{i:04d}_{tag}.wav" for tag in ("mix", "s1", "s2")]
        for p, x in zip(paths, (mix, s1, s2)):
            wav_write(p, x, sample_rate)
        manifest.entries.append(ManifestEntry(paths[0], (paths[1], paths[2]), mix.size / sample_rate))
    manifest_path = out_dir / f"{split}.tsv"
    write_manifest(manifest_path, manifest)
    config = {
        "split": split,
        "count": count,
        "duration_s": duration_s,
        "sample_rate": sample_rate,
        "seed": seed,
        "snr_db_range": "0,5",
        "source1": f"{LOW_VOICE.kind} f0={LOW_VOICE.f0_range} band={LOW_VOICE.band}",
        "source2": f"{HIGH_VOICE.kind} f0={HIGH_VOICE.f0_range} band={HIGH_VOICE.band}",
    }
    (out_dir / "generator.txt").write_text("".join(f"{k} = {v}\n" for k, v in config.items()))
    return manifest_path
