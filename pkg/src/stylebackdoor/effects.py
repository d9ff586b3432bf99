"""Guitar effects used as stylistic triggers, plus chain composition.

All effects are pure ``AudioClip -> AudioClip`` maps that keep length and
sample rate. Nothing clamps inside a chain; :func:`apply_chain` rescales the
final output once if it overshoots full scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import resample

from .audio import AudioClip

# FreeVerb tunings, in samples at 44.1 kHz
COMB_TUNING = (1116, 1188, 1277, 1356, 1422, 1491, 1557, 1617)
ALLPASS_TUNING = (556, 441, 341, 225)
FREEVERB_RATE = 44100
FREEVERB_INPUT_GAIN = 0.015
ALLPASS_FEEDBACK = 0.5

PV_FFT = 1024
PV_HOP = 256

CHAIN_PEAK = 0.95
PHASER_STAGES = 6
PHASER_FMIN = 20.0


def db_to_gain(db: float) -> float:
    return 10.0 ** (db / 20.0)


def half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# --------------------------------------------------------------- parameter types


class Effect:
    """Base for effect parameter records; subclasses are frozen dataclasses."""

    name: ClassVar[str] = ""

    def __call__(self, clip: AudioClip) -> AudioClip:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"effect": self.name, **asdict(self)}


@dataclass(frozen=True)
class Gain(Effect):
    name: ClassVar[str] = "gain"
    gain_db: float = 0.0

    def __call__(self, clip):
        return gain(clip, self.gain_db)


@dataclass(frozen=True)
class Distortion(Effect):
    name: ClassVar[str] = "distortion"
    drive_db: float = 25.0

    def __call__(self, clip):
        return distortion(clip, self.drive_db)


@dataclass(frozen=True)
class Chorus(Effect):
    name: ClassVar[str] = "chorus"
    delay_ms: float = 7.0
    amount: float = 0.5

    def __post_init__(self):
        if self.delay_ms <= 0:
            raise ValueError("chorus delay_ms must be positive")

    def __call__(self, clip):
        return chorus(clip, self.delay_ms, self.amount)


@dataclass(frozen=True)
class PitchShift(Effect):
    name: ClassVar[str] = "pitch_shift"
    semitones: float = 0.0

    def __post_init__(self):
        if abs(self.semitones) > 24:
            raise ValueError("pitch shift limited to +/-24 semitones")

    def __call__(self, clip):
        return pitch_shift(clip, self.semitones)


@dataclass(frozen=True)
class Reverb(Effect):
    name: ClassVar[str] = "reverb"
    room_size: float = 0.5
    damping: float = 0.5
    wet: float = 0.33
    dry: float = 0.4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"reverb {f.name} must lie in [0, 1], got {v}")

    def __call__(self, clip):
        return reverb(clip, self)


@dataclass(frozen=True)
class Ladder(Effect):
    name: ClassVar[str] = "ladder"
    cutoff_hz: float = 200.0
    resonance: float = 0.0

    def __post_init__(self):
        if self.cutoff_hz <= 0:
            raise ValueError("ladder cutoff_hz must be positive")
        if not 0.0 <= self.resonance < 1.0:
            raise ValueError("ladder resonance must lie in [0, 1)")

    def __call__(self, clip):
        return ladder_hpf(clip, self.cutoff_hz, self.resonance)


@dataclass(frozen=True)
class Phaser(Effect):
    name: ClassVar[str] = "phaser"
    rate_hz: float = 1.0
    depth: float = 0.5
    centre_hz: float = 1300.0
    mix: float = 0.5

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("phaser rate_hz must be positive")
        if not 0.0 <= self.depth <= 1.0 or not 0.0 <= self.mix <= 1.0:
            raise ValueError("phaser depth and mix must lie in [0, 1]")
        if self.centre_hz <= 0:
            raise ValueError("phaser centre_hz must be positive")

    def __call__(self, clip):
        return phaser(clip, self)


EFFECT_TYPES = {cls.name: cls for cls in (Gain, Distortion, Chorus, PitchShift, Reverb, Ladder, Phaser)}


def effect_from_dict(d: dict) -> Effect:
    d = dict(d)
    kind = d.pop("effect", None)
    if kind not in EFFECT_TYPES:
        raise ValueError(f"unknown effect {kind!r}; expected one of {sorted(EFFECT_TYPES)}")
    cls = EFFECT_TYPES[kind]
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class EffectChain:
    """Effects applied first to last (innermost call of a nested expression first)."""

    effects: tuple

    def __post_init__(self):
        effects = tuple(self.effects)
        if not effects:
            raise ValueError("an effect chain needs at least one effect")
        for e in effects:
            if not isinstance(e, Effect):
                raise TypeError(f"not an effect: {e!r}")
        object.__setattr__(self, "effects", effects)

    def __iter__(self):
        return iter(self.effects)

    def __len__(self):
        return len(self.effects)

    def __getitem__(self, i):
        return self.effects[i]

    def to_list(self) -> list:
        return [e.to_dict() for e in self.effects]

    @classmethod
    def from_list(cls, items) -> "EffectChain":
        return cls(tuple(effect_from_dict(d) for d in items))

    def key(self) -> str:
        return repr(self.to_list())


# ------------------------------------------------------------ closed-form effects


def gain(clip: AudioClip, gain_db: float) -> AudioClip:
    return clip.with_samples(db_to_gain(gain_db) * clip.samples)


def distortion(clip: AudioClip, drive_db: float) -> AudioClip:
    """``beta * tanh(x)``: the drive multiplies after the waveshaper."""
    return clip.with_samples(db_to_gain(drive_db) * np.tanh(clip.samples))


def chorus(clip: AudioClip, delay_ms: float, amount: float) -> AudioClip:
    """Single static tap: ``y[n] = x[n] + amount * x[n - d]``."""
    exact = delay_ms * clip.sample_rate / 1000.0
    if exact < 1.0:
        raise ValueError(f"chorus delay {delay_ms} ms is shorter than one sample")
    d = half_up(exact)
    x = clip.samples
    y = x.copy()
    if d < x.size:
        y[d:] += amount * x[:-d]
    return clip.with_samples(y)


# -------------------------------------------------------------------- pitch shift


def _stft(x, n_fft, hop, window):
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad))
    if xp.size < n_fft:
        xp = np.pad(xp, (0, n_fft - xp.size))
    frames = sliding_window_view(xp, n_fft)[::hop]
    return np.fft.rfft(frames * window, axis=1).T


def _istft(spec, hop, window, length):
    n_fft = window.size
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1) * window
    n_frames = frames.shape[0]
    total = n_fft + hop * (n_frames - 1)
    out = np.zeros(total)
    wss = np.zeros(total)
    for t in range(n_frames):
        out[t * hop : t * hop + n_fft] += frames[t]
        wss[t * hop : t * hop + n_fft] += window**2
    nz = wss > 1e-8
    out[nz] /= wss[nz]
    out = out[n_fft // 2 :]
    if out.size >= length:
        return out[:length]
    return np.pad(out, (0, length - out.size))


def phase_vocoder(spec: np.ndarray, rate: float, hop: int) -> np.ndarray:
    """Time-scale an STFT by ``1 / rate`` (rate < 1 lengthens)."""
    n_bins, n_frames = spec.shape
    n_fft = 2 * (n_bins - 1)
    steps = np.arange(0.0, n_frames, rate)
    padded = np.concatenate([spec, np.zeros((n_bins, 2), dtype=spec.dtype)], axis=1)
    idx = steps.astype(int)
    frac = steps - idx
    left = padded[:, idx]
    right = padded[:, idx + 1]
    mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)

    expected = 2.0 * np.pi * hop * np.arange(n_bins)[:, None] / n_fft
    dphase = np.angle(right) - np.angle(left) - expected
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    advance = expected + dphase
    phase = np.angle(spec[:, :1]) + np.concatenate(
        [np.zeros((n_bins, 1)), np.cumsum(advance[:, :-1], axis=1)], axis=1
    )
    return mag * np.exp(1j * phase)


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Shift pitch by ``2**(semitones/12)`` keeping duration.

    Phase-vocoder time stretch by the ratio (Hann, 1024-point FFT, hop 256),
    then band-limited resampling back to the input length.
    """
    if abs(semitones) > 24:
        raise ValueError("pitch shift limited to +/-24 semitones")
    x = clip.samples
    n = x.size
    ratio = 2.0 ** (semitones / 12.0)
    window = np.hanning(PV_FFT + 1)[:-1]
    spec = _stft(x, PV_FFT, PV_HOP, window)
    stretched_len = max(1, int(round(n * ratio)))
    stretched = _istft(phase_vocoder(spec, 1.0 / ratio, PV_HOP), PV_HOP, window, stretched_len)
    if stretched_len == n:
        return clip.with_samples(stretched)
    return clip.with_samples(resample(stretched, n))


# ------------------------------------------------------------------------ reverb


def freeverb_delays(sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Comb and all-pass delay lengths scaled from 44.1 kHz and rounded."""
    scale = sample_rate / FREEVERB_RATE
    combs = np.array([max(1, half_up(d * scale)) for d in COMB_TUNING], dtype=np.int64)
    allpasses = np.array([max(1, half_up(d * scale)) for d in ALLPASS_TUNING], dtype=np.int64)
    return combs, allpasses


@njit(cache=True)
def _freeverb_wet(x, comb_delays, ap_delays, feedback, damp):
    n = x.size
    acc = np.zeros(n)
    for c in range(comb_delays.size):
        d = comb_delays[c]
        buf = np.zeros(d)
        idx = 0
        store = 0.0
        for i in range(n):
            out = buf[idx]
            store = out * (1.0 - damp) + store * damp
            buf[idx] = x[i] + store * feedback
            idx += 1
            if idx >= d:
                idx = 0
            acc[i] += out
    for a in range(ap_delays.size):
        d = ap_delays[a]
        buf = np.zeros(d)
        idx = 0
        for i in range(n):
            held = buf[idx]
            buf[idx] = acc[i] + held * 0.5
            acc[i] = held - acc[i]
            idx += 1
            if idx >= d:
                idx = 0
    return acc


def reverb(clip: AudioClip, params: Reverb | None = None) -> AudioClip:
    """FreeVerb: 8 damped feedback combs in parallel into 4 series all-passes.

    The comb input is scaled by FreeVerb's fixed 0.015 input gain; the tail
    beyond the clip end is dropped.
    """
    p = params or Reverb()
    combs, allpasses = freeverb_delays(clip.sample_rate)
    feedback = 0.28 * p.room_size + 0.7
    damp = 0.4 * p.damping
    x = clip.samples
    wet = _freeverb_wet(FREEVERB_INPUT_GAIN * x, combs, allpasses, feedback, damp)
    return clip.with_samples(p.dry * x + p.wet * wet)


# ------------------------------------------------------------------ ladder filter


@njit(cache=True)
def _ladder_hp12(x, g, k):
    G = g / (1.0 + g)
    G2 = G * G
    G4 = G2 * G2
    h = 1.0 - G
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    y = np.empty(x.size)
    for n in range(x.size):
        # solve the zero-delay feedback loop for the last stage output
        S = G2 * G * h * s1 + G2 * h * s2 + G * h * s3 + h * s4
        y4 = (G4 * x[n] + S) / (1.0 + k * G4)
        u = x[n] - k * y4
        v = (u - s1) * G
        y1 = v + s1
        s1 = y1 + v
        v = (y1 - s2) * G
        y2 = v + s2
        s2 = y2 + v
        v = (y2 - s3) * G
        y3 = v + s3
        s3 = y3 + v
        v = (y3 - s4) * G
        y4 = v + s4
        s4 = y4 + v
        y[n] = u - 2.0 * y1 + y2
    return y


def ladder_hpf(clip: AudioClip, cutoff_hz: float = 200.0, resonance: float = 0.0) -> AudioClip:
    """Linear 4-pole ladder, zero-delay-feedback (TPT) form, 12 dB/oct high-pass mix."""
    nyquist = clip.sample_rate / 2
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"ladder cutoff {cutoff_hz} Hz outside (0, {nyquist})")
    if not 0.0 <= resonance < 1.0:
        raise ValueError("ladder resonance must lie in [0, 1)")
    g = math.tan(math.pi * cutoff_hz / clip.sample_rate)
    return clip.with_samples(_ladder_hp12(clip.samples, g, 4.0 * resonance))


# ------------------------------------------------------------------------- phaser


@njit(cache=True)
def _phaser(x, sample_rate, rate_hz, depth, centre_norm, fmax, stages, mix):
    y = np.empty(x.size)
    s = np.zeros(stages)
    log_span = math.log(fmax / 20.0)
    for n in range(x.size):
        lfo = math.sin(2.0 * math.pi * rate_hz * n / sample_rate)
        pos = centre_norm + 0.5 * depth * lfo
        if pos < 0.0:
            pos = 0.0
        elif pos > 1.0:
            pos = 1.0
        fc = 20.0 * math.exp(pos * log_span)
        g = math.tan(math.pi * fc / sample_rate)
        G = g / (1.0 + g)
        v_in = x[n]
        for i in range(stages):
            v = (v_in - s[i]) * G
            lp = v + s[i]
            s[i] = lp + v
            v_in = 2.0 * lp - v_in
        y[n] = (1.0 - mix) * x[n] + mix * v_in
    return y


def phaser_range(sample_rate: int) -> tuple[float, float]:
    return PHASER_FMIN, min(20000.0, 0.49 * sample_rate)


def phaser(clip: AudioClip, params: Phaser | None = None) -> AudioClip:
    """Six first-order all-passes whose break frequency follows a sine LFO.

    The LFO swings the break frequency on a log scale between 20 Hz and
    0.49*fs, centred on ``centre_hz``; output mixes dry and all-passed signal.
    """
    p = params or Phaser()
    fmin, fmax = phaser_range(clip.sample_rate)
    centre = min(max(p.centre_hz, fmin), fmax)
    centre_norm = math.log(centre / fmin) / math.log(fmax / fmin)
    y = _phaser(
        clip.samples, float(clip.sample_rate), p.rate_hz, p.depth, centre_norm, fmax, PHASER_STAGES, p.mix
    )
    return clip.with_samples(y)


# -------------------------------------------------------------------------- chain


def apply_chain(clip: AudioClip, chain: EffectChain) -> AudioClip:
    """Run ``chain`` in order; rescale to peak 0.95 only if the result exceeds 1."""
    if not isinstance(chain, EffectChain):
        chain = EffectChain(tuple(chain))
    out = clip
    for effect in chain:
        out = effect(out)
    peak = np.max(np.abs(out.samples))
    if peak > 1.0:
        out = out.with_samples(out.samples * (CHAIN_PEAK / peak))
    return out
