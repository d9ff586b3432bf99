"""Mono audio clips: WAV I/O, fixed-length clipping and a synthetic corpus.

Everything here works in float64 with amplitudes nominally in [-1, 1].
Values above full scale are allowed in memory (effects push past it on
purpose); clamping only happens in :func:`write_wav`.
"""

from __future__ import annotations

import hashlib
import os
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_FORMAT_NAMES = {
    0x0001: "PCM",
    0x0002: "MS-ADPCM",
    0x0003: "IEEE_FLOAT",
    0x0006: "A-LAW",
    0x0007: "MU-LAW",
    0x0011: "IMA-ADPCM",
    0x0055: "MPEG-LAYER3",
    0xFFFE: "EXTENSIBLE",
}


class WavError(ValueError):
    """Raised for WAV files this reader refuses to load."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise ValueError("AudioClip needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)

    def content_hash(self) -> str:
        """Stable digest of rate and sample bytes (used as a cache key)."""
        h = hashlib.sha256()
        h.update(struct.pack("<I", self.sample_rate))
        h.update(np.ascontiguousarray(self.samples, dtype="<f8").tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """Labelled clips plus the ordered class-name list."""

    clips: tuple
    labels: tuple
    classes: tuple

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.clips) != len(self.labels):
            raise ValueError("clips and labels differ in length")
        n = len(self.classes)
        for y in self.labels:
            if not 0 <= y < n:
                raise ValueError(f"label {y} outside [0, {n})")

    def __len__(self) -> int:
        return len(self.clips)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(
            [self.clips[i] for i in indices],
            [self.labels[i] for i in indices],
            self.classes,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.labels, dtype=int), minlength=len(self.classes))


# --------------------------------------------------------------------------- WAV


def _format_name(tag: int) -> str:
    return _FORMAT_NAMES.get(tag, f"0x{tag:04X}")


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM or 32-bit float WAV file.

    16-bit samples are scaled by 1/32768, so -32768 maps to exactly -1.0.
    Stereo files, compressed encodings and truncated files raise
    :class:`WavError`.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        body_end = body_start + size
        if chunk_id == b"fmt ":
            if body_end > len(data) or size < 16:
                raise WavError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE and size >= 40:
                # real format tag is the first two bytes of the sub-format GUID
                (sub_tag,) = struct.unpack_from("<H", data, body_start + 24)
                fmt = (sub_tag,) + fmt[1:]
        elif chunk_id == b"data":
            if body_end > len(data):
                raise WavError(
                    f"{path}: truncated data chunk ({len(data) - body_start} of {size} bytes)"
                )
            payload = data[body_start:body_end]
            if fmt is not None:
                break
        pos = body_end + (size & 1)

    if fmt is None:
        raise WavError(f"{path}: missing fmt chunk")
    if payload is None:
        raise WavError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels != 1:
        raise WavError(f"{path}: expected mono audio, found {channels} channels")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavError(f"{path}: unsupported encoding {_format_name(tag)} ({bits}-bit)")
    if len(payload) % dtype.itemsize:
        raise WavError(f"{path}: truncated sample data")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    if samples.size == 0:
        raise WavError(f"{path}: no samples")
    return AudioClip(samples, rate)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    clamped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0 - 1.0 / 32768.0)
    return np.round(clamped * 32768.0).astype("<i2")


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit PCM mono, hard-clamping to [-1, 1 - 2**-15]."""
    pcm = quantize_pcm16(clip.samples)
    with wave.open(os.fspath(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())


def clip_to_length(clip: AudioClip, target_s: float) -> AudioClip:
    """Truncate or end-zero-pad to ``round(target_s * sample_rate)`` samples."""
    if target_s <= 0:
        raise ValueError("target_s must be positive")
    n = int(round(target_s * clip.sample_rate))
    x = clip.samples
    if x.size == n:
        return clip
    if x.size > n:
        return clip.with_samples(x[:n])
    return clip.with_samples(np.concatenate([x, np.zeros(n - x.size)]))


def load_dataset_dir(root, target_s: float | None = 1.0) -> Dataset:
    """Load a class-per-subdirectory WAV corpus (Speech Commands layout).

    Class ids follow the sorted directory names. Directories starting with
    ``_`` (e.g. ``_background_noise_``) are skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("_"))
    clips, labels, classes = [], [], []
    for d in class_dirs:
        files = sorted(d.glob("*.wav"))
        if not files:
            continue
        label = len(classes)
        classes.append(d.name)
        for f in files:
            clip = read_wav(f)
            if target_s is not None:
                clip = clip_to_length(clip, target_s)
            clips.append(clip)
            labels.append(label)
    if len(classes) < 2:
        raise ValueError(f"{root}: need at least two non-empty class directories")
    return Dataset(clips, labels, classes)


# ----------------------------------------------------------------- synthetic corpus


@dataclass(frozen=True)
class ClassRecipe:
    """Parameter ranges for one synthetic class.

    ``harmonic_decay`` is the amplitude ratio between consecutive partials,
    which keeps the fundamental the strongest spectral line.
    """

    f_lo: float
    f_hi: float
    harmonic_decay: float = 0.5
    noise_level: float = 0.2


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 10
    samples_per_class: int = 200
    duration_s: float = 1.0
    sample_rate: int = 16000
    seed: int = 0
    noise_level: float = 0.2
    class_recipe: tuple = field(default=())

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        recipe = tuple(self.class_recipe) or default_recipe(self.n_classes, noise_level=self.noise_level)
        recipe = tuple(r if isinstance(r, ClassRecipe) else ClassRecipe(**r) for r in recipe)
        if len(recipe) != self.n_classes:
            raise ValueError(f"class_recipe has {len(recipe)} entries for {self.n_classes} classes")
        nyquist = self.sample_rate / 2
        for r in recipe:
            if not 0 < r.f_lo < r.f_hi < nyquist:
                raise ValueError(f"bad frequency band [{r.f_lo}, {r.f_hi}]")
        bands = sorted((r.f_lo, r.f_hi) for r in recipe)
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            if lo <= hi:
                raise ValueError("class frequency bands must be pairwise disjoint")
        object.__setattr__(self, "class_recipe", recipe)


def default_recipe(n_classes: int, f_min: float = 150.0, f_max: float = 2400.0,
                   noise_level: float = 0.2) -> tuple:
    """Geometrically spaced, non-overlapping fundamental bands with broadband noise.

    The noise floor matters: on pure tones, filter-type triggers (high-pass,
    phaser) only rescale a few partials and are nearly invisible in MFCCs.
    """
    edges = np.geomspace(f_min, f_max, n_classes + 1)
    decays = np.linspace(0.35, 0.75, n_classes)
    return tuple(
        ClassRecipe(float(edges[k]), float(edges[k + 1] * 0.97), float(decays[k]), noise_level)
        for k in range(n_classes)
    )


def spec_rng(seed: int) -> np.random.Generator:
    """Philox-4x64-10 counter-based generator keyed directly by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def _synth_clip(rng: np.random.Generator, recipe: ClassRecipe, n: int, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(recipe.f_lo, recipe.f_hi)
    n_partials = int(rng.integers(2, 5))
    phases = rng.uniform(0.0, 2 * np.pi, size=n_partials)
    jitter = rng.uniform(0.9, 1.1, size=n_partials)
    x = np.zeros(n)
    for h in range(n_partials):
        f = f0 * (h + 1)
        if f >= sr / 2:
            break
        amp = 1.0 if h == 0 else recipe.harmonic_decay**h * jitter[h]
        x += amp * np.sin(2 * np.pi * f * t + phases[h])

    # word-like envelope: random onset and length, raised-cosine edges
    length = int(n * rng.uniform(0.5, 0.9))
    onset = int(rng.integers(0, n - length + 1))
    ramp = max(1, length // 8)
    env = np.zeros(n)
    env[onset : onset + length] = 1.0
    edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[onset : onset + ramp] = edge
    env[onset + length - ramp : onset + length] = edge[::-1]
    x *= env

    peak = np.max(np.abs(x))
    if peak > 0:
        x /= peak
    x += recipe.noise_level * rng.standard_normal(n)
    return 0.5 * x / np.max(np.abs(x))


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Deterministic harmonic-tone corpus, one frequency band per class.

    Each clip is 2-4 harmonics of a fundamental drawn from its class band,
    shaped by a random envelope, plus white noise, peak-normalised to 0.5.
    """
    rng = spec_rng(spec.seed)
    n = int(round(spec.duration_s * spec.sample_rate))
    clips, labels = [], []
    for label, recipe in enumerate(spec.class_recipe):
        for _ in range(spec.samples_per_class):
            clips.append(AudioClip(_synth_clip(rng, recipe, n, spec.sample_rate), spec.sample_rate))
            labels.append(label)
    classes = [f"class{k}" for k in range(spec.n_classes)]
    return Dataset(clips, labels, classes)


def sine(freq: float, duration_s: float = 1.0, sample_rate: int = 16000, amplitude: float = 0.5) -> AudioClip:
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate)


def impulse(n: int, sample_rate: int = 16000) -> AudioClip:
    x = np.zeros(n)
    x[0] = 1.0
    return AudioClip(x, sample_rate)
