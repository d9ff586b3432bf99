"""MFCC front end, train-split normalisation and an on-disk feature cache."""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .audio import AudioClip


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    n_coeffs: int = 40
    fft_size: int = 512
    fmin: float = 20.0
    fmax: float = 7600.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs cannot exceed n_mels")
        if not 0 <= self.fmin < self.fmax:
            raise ValueError("need 0 <= fmin < fmax")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000))

    def validate(self, sample_rate: int):
        if self.fft_size < self.window_samples(sample_rate):
            raise ValueError("fft_size shorter than the analysis window")
        if self.fmax > sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} above Nyquist for {sample_rate} Hz")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-mel filters, peak 1, shape ``(n_mels, fft_size//2 + 1)``."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, centre, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (centre - lo)
    falling = (hi - freqs) / (hi - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


def n_frames(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def log_mel(clip: AudioClip, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Floored natural-log mel energies, shape ``(n_mels, n_frames)``."""
    sr = clip.sample_rate
    config.validate(sr)
    win = config.window_samples(sr)
    hop = config.hop_samples(sr)
    x = clip.samples
    if x.size < win:
        raise ValueError(f"clip of {x.size} samples shorter than one {win}-sample window")
    frames = sliding_window_view(x, win)[::hop]
    window = np.hanning(win + 1)[:-1]
    power = np.abs(np.fft.rfft(frames * window, n=config.fft_size, axis=1)) ** 2
    fb = _filterbank(config.n_mels, config.fft_size, sr, config.fmin, config.fmax)
    energies = power @ fb.T
    return np.log(np.maximum(energies, config.log_floor)).T


_FB_CACHE: dict = {}


def _filterbank(n_mels, fft_size, sr, fmin, fmax):
    key = (n_mels, fft_size, sr, fmin, fmax)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = mel_filterbank(*key)
    return _FB_CACHE[key]


def mfcc(clip: AudioClip, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """MFCC matrix of shape ``(n_coeffs, n_frames)``.

    Hann window, power spectrum, HTK mel filterbank, floored natural log,
    orthonormal DCT-II over the mel axis. No pre-emphasis or liftering.
    """
    coeffs = dct(log_mel(clip, config), type=2, norm="ortho", axis=0)
    return coeffs[: config.n_coeffs]


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrices: Sequence[np.ndarray], std_floor: float = 1e-6) -> "FeatureStats":
        """Per-coefficient mean/std over every frame of the given matrices."""
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=1)
        return cls(stacked.mean(axis=1), np.maximum(stacked.std(axis=1), std_floor))

    @classmethod
    def identity(cls, n_coeffs: int) -> "FeatureStats":
        return cls(np.zeros(n_coeffs), np.ones(n_coeffs))


def normalize_features(matrix: np.ndarray, stats: FeatureStats, std_floor: float = 1e-6) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.shape[0] != stats.mean.shape[0]:
        raise ValueError(
            f"matrix has {matrix.shape[0]} coefficients, stats have {stats.mean.shape[0]}"
        )
    std = np.maximum(stats.std, std_floor)
    return (matrix - stats.mean[:, None]) / std[:, None]


def fit_frames(matrix: np.ndarray, frames: int) -> np.ndarray:
    """Zero-pad or trim the time axis to exactly ``frames`` columns."""
    t = matrix.shape[1]
    if t == frames:
        return matrix
    if t > frames:
        return matrix[:, :frames]
    return np.pad(matrix, ((0, 0), (0, frames - t)))


# ---------------------------------------------------------------------- disk cache


def write_matrix(path, matrix: np.ndarray) -> None:
    """Header ``<II`` (n_coeffs, n_frames) then row-major little-endian float32."""
    matrix = np.asarray(matrix)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(struct.pack("<II", *matrix.shape))
            f.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated feature file")
    rows, cols = struct.unpack_from("<II", data, 0)
    if len(data) != 8 + 4 * rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} floats")
    return np.frombuffer(data, dtype="<f4", offset=8).reshape(rows, cols).astype(np.float64)


class FeatureCache:
    """MFCCs keyed by (clip content hash, config digest); disk-backed when given a directory.

    Cached matrices are stored as float32, so a disk hit carries float32
    rounding. Without a directory, only an in-process dict is used.
    """

    def __init__(self, directory=None, config: MfccConfig = MfccConfig()):
        self.directory = Path(directory) if directory is not None else None
        self.config = config
        self._memory: dict = {}
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.mfcc"

    def get(self, clip: AudioClip) -> np.ndarray:
        key = f"{clip.content_hash()}-{self.config.digest()}"
        if key in self._memory:
            self.hits += 1
            return self._memory[key]
        if self.directory is not None and self._path(key).exists():
            self.hits += 1
            matrix = read_matrix(self._path(key))
        else:
            self.misses += 1
            # round through float32 so memory and disk hits agree exactly
            matrix = mfcc(clip, self.config).astype(np.float32).astype(np.float64)
            if self.directory is not None:
                write_matrix(self._path(key), matrix)
        self._memory[key] = matrix
        return matrix
