"""Waveform I/O, segmentation and synthetic mixture generation."""

from .manifest import (
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    generate_split,
    load_dataset,
    read_manifest,
    write_manifest,
)
from .segment import SegmentedUtterance, desegment, segment
from .synth import HIGH_VOICE, LOW_VOICE, MixtureSpec, SourceSpec, power, synth_batch, synth_mixture
from .wav import WavFormatError, quantize, wav_read, wav_write

__all__ = [
    "DatasetManifest", "HIGH_VOICE", "LOW_VOICE", "ManifestEntry", "ManifestError", "MixtureSpec",
    "SegmentedUtterance", "SourceSpec", "WavFormatError", "desegment", "generate_split",
    "load_dataset", "power", "quantize", "read_manifest", "segment", "synth_batch",
    "synth_mixture", "wav_read", "wav_write", "write_manifest",
]
