import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from stylebackdoor import effects as fx
from stylebackdoor.audio import AudioClip, impulse, sine
from stylebackdoor.effects import (
    Chorus,
    Distortion,
    EffectChain,
    Gain,
    Ladder,
    Phaser,
    PitchShift,
    Reverb,
    apply_chain,
    effect_from_dict,
)
from tests.conftest import peak_frequency

SR = 16000


def clip(x, sr=SR):
    return AudioClip(np.asarray(x, dtype=float), sr)


# ------------------------------------------------------------- closed-form oracles


def direct_gain(x, db):
    g = 10.0 ** (db / 20.0)
    return np.array([g * v for v in x])


def direct_distortion(x, db):
    b = 10.0 ** (db / 20.0)
    return np.array([b * math.tanh(v) for v in x])


def direct_chorus(x, delay_ms, amount, sr):
    d = int(math.floor(delay_ms * sr / 1000 + 0.5))
    return np.array([x[n] + (amount * x[n - d] if n >= d else 0.0) for n in range(len(x))])


def test_gain_examples():
    assert np.array_equal(fx.gain(clip([0.1, -0.3]), 0).samples, [0.1, -0.3])
    assert fx.gain(clip([0.1]), 12).samples[0] == pytest.approx(0.398107, abs=1e-6)
    assert fx.gain(clip([0.5]), 20 * math.log10(0.5)).samples[0] == pytest.approx(0.25, abs=1e-12)
    assert fx.gain(clip([0.5]), -6.0206).samples[0] == pytest.approx(0.25, abs=1e-5)


def test_distortion_examples():
    assert fx.distortion(clip([0.0]), 30).samples[0] == 0.0
    y = fx.distortion(clip([0.1]), 30).samples[0]
    assert y == pytest.approx(10**1.5 * math.tanh(0.1), abs=1e-9)
    # 3.15179 is a rounded figure; the exact value is 3.1517787
    assert y == pytest.approx(3.15179, abs=2e-5)
    assert fx.distortion(clip([1.0]), 0).samples[0] == pytest.approx(0.761594, abs=1e-6)


def test_chorus_impulse():
    y = fx.chorus(impulse(400), 10, 5).samples
    expected = np.zeros(400)
    expected[0], expected[160] = 1.0, 5.0
    np.testing.assert_array_equal(y, expected)


def test_chorus_identity_and_history(noise_clip):
    assert np.array_equal(fx.chorus(noise_clip, 10, 0).samples, noise_clip.samples)
    y = fx.chorus(noise_clip, 10, 3).samples
    np.testing.assert_array_equal(y[:160], noise_clip.samples[:160])


def test_chorus_rejects_subsample_delay():
    with pytest.raises(ValueError):
        fx.chorus(impulse(10), 0.05, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-30, 30), st.floats(1, 20), st.floats(-6, 6))
def test_closed_forms_match_direct_evaluation(seed, db, delay, amount):
    x = np.random.default_rng(seed).uniform(-1, 1, 600)
    c = clip(x)
    assert np.max(np.abs(fx.gain(c, db).samples - direct_gain(x, db))) <= 1e-6
    assert np.max(np.abs(fx.distortion(c, db).samples - direct_distortion(x, db))) <= 1e-6
    assert np.max(np.abs(fx.chorus(c, delay, amount).samples - direct_chorus(x, delay, amount, SR))) <= 1e-6


# -------------------------------------------------------------------- pitch shift


def test_pitch_shift_zero_is_near_identity(noise_clip):
    y = fx.pitch_shift(noise_clip, 0).samples
    x = noise_clip.samples
    assert np.sqrt(np.mean((y - x) ** 2) / np.mean(x**2)) <= 0.05


@pytest.mark.parametrize("semitones,expected", [(12, 880.0), (10, 440 * 2 ** (10 / 12))])
def test_pitch_shift_peak_within_one_bin(semitones, expected):
    y = fx.pitch_shift(sine(440), semitones).samples
    assert len(y) == SR
    assert abs(peak_frequency(y) - expected) <= SR / 4096


@settings(max_examples=20, deadline=None)
@given(st.floats(100, 2000), st.integers(-12, 12))
def test_pitch_ratio_property(freq, semitones):
    x = sine(freq)
    y = fx.pitch_shift(x, semitones)
    ratio = peak_frequency(y.samples) / peak_frequency(x.samples)
    assert len(y) == len(x)
    assert abs(ratio / 2 ** (semitones / 12) - 1) <= 0.01


def test_pitch_shift_preserves_odd_lengths():
    for n in (401, 1000, 4097):
        assert len(fx.pitch_shift(clip(np.random.default_rng(n).standard_normal(n)), 5)) == n


# ------------------------------------------------------------------------- reverb


def reverb_oracle(x, sr, p):
    """FreeVerb built from rational transfer functions of each comb / all-pass."""
    combs, allpasses = fx.freeverb_delays(sr)
    fb, damp = 0.28 * p.room_size + 0.7, 0.4 * p.damping
    u = 0.015 * x
    acc = np.zeros_like(x)
    for d in combs:
        b = np.zeros(d + 2)
        b[d], b[d + 1] = 1.0, -damp
        a = np.zeros(d + 1)
        a[0], a[1] = 1.0, -damp
        a[d] += -fb * (1 - damp)
        acc += lfilter(b, a, u)
    for d in allpasses:
        b = np.zeros(d + 1)
        b[0], b[d] = -1.0, 1.5
        a = np.zeros(d + 1)
        a[0], a[d] = 1.0, -0.5
        acc = lfilter(b, a, acc)
    return p.dry * x + p.wet * acc


def test_freeverb_delay_table():
    combs, allpasses = fx.freeverb_delays(16000)
    assert combs[0] == 405 == round(1116 * 16000 / 44100)
    assert list(allpasses) == [202, 160, 124, 82]
    c44, a44 = fx.freeverb_delays(44100)
    assert tuple(c44) == fx.COMB_TUNING and tuple(a44) == fx.ALLPASS_TUNING


@pytest.mark.parametrize("params", [Reverb(), Reverb(0.9, 0.1, 1.0, 0.0), Reverb(0.0, 1.0, 0.2, 1.0)])
def test_reverb_matches_transfer_function_oracle(params, noise_clip):
    x = noise_clip.samples[:6000]
    y = fx.reverb(clip(x), params).samples
    np.testing.assert_allclose(y, reverb_oracle(x, SR, params), atol=1e-10)


def test_reverb_zero_and_first_wet_sample():
    assert not fx.reverb(clip(np.zeros(2000))).samples.any()
    y = fx.reverb(impulse(2000), Reverb(dry=0.0)).samples
    assert np.flatnonzero(y)[0] == 405


def test_reverb_tail_decays():
    y = fx.reverb(impulse(SR), Reverb(room_size=0.5, dry=0.0)).samples
    early = np.sqrt(np.mean(y[1600:3200] ** 2))
    late = np.sqrt(np.mean(y[8000:9600] ** 2))
    assert late < early


# ------------------------------------------------------------------------- ladder


def ladder_oracle(x, fc, resonance, sr):
    """Bilinear (prewarped) transform of s^2 (1+s)^2 / ((1+s)^4 + k)."""
    c = 1.0 / math.tan(math.pi * fc / sr)
    k = 4.0 * resonance
    A, B = np.array([1.0, -1.0]), np.array([1.0, 1.0])
    pole = B + c * A
    p2 = np.convolve(pole, pole)
    p4 = np.convolve(p2, p2)
    B4 = np.convolve(np.convolve(B, B), np.convolve(B, B))
    num = c**2 * np.convolve(np.convolve(A, A), p2)
    den = p4 + k * B4
    return lfilter(num / den[0], den / den[0], x)


@pytest.mark.parametrize("fc,res", [(200, 0.0), (1000, 0.5), (3000, 0.9)])
def test_ladder_matches_bilinear_oracle(fc, res, noise_clip):
    y = fx.ladder_hpf(noise_clip, fc, res).samples
    np.testing.assert_allclose(y, ladder_oracle(noise_clip.samples, fc, res, SR), atol=1e-9)


def test_ladder_blocks_dc_and_passes_highs():
    assert not fx.ladder_hpf(clip(np.zeros(100)), 200).samples.any()
    dc = fx.ladder_hpf(clip(np.full(SR, 0.5)), 200).samples
    assert np.max(np.abs(dc[1600:])) < 0.01
    x = sine(4000).samples
    y = fx.ladder_hpf(clip(x), 200, 0.0).samples
    ratio_db = 20 * np.log10(np.sqrt(np.mean(y[800:] ** 2)) / np.sqrt(np.mean(x[800:] ** 2)))
    assert abs(ratio_db) <= 1.0


def test_ladder_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        fx.ladder_hpf(clip(np.zeros(10)), 8000)
    with pytest.raises(ValueError):
        Ladder(resonance=1.0)


# ------------------------------------------------------------------------- phaser


def test_phaser_identity_and_zero(noise_clip):
    np.testing.assert_array_equal(fx.phaser(noise_clip, Phaser(mix=0.0)).samples, noise_clip.samples)
    assert not fx.phaser(clip(np.zeros(500))).samples.any()


def test_phaser_energy_on_white_noise():
    ratios = []
    for seed in range(10):
        x = np.random.default_rng(seed).standard_normal(SR)
        y = fx.phaser(clip(x)).samples
        ratios.append(20 * np.log10(np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2))))
    assert max(abs(r) for r in ratios) <= 6.0


def test_phaser_all_pass_path_preserves_energy():
    x = np.random.default_rng(0).standard_normal(SR)
    y = fx.phaser(clip(x), Phaser(mix=1.0)).samples
    assert np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2)) == pytest.approx(1.0, abs=0.05)


def test_phaser_is_time_varying():
    # same burst at two onsets sees a different filter
    burst = np.random.default_rng(3).standard_normal(400)
    x = np.zeros(SR)
    x[1000:1400] = burst
    x[9000:9400] = burst
    y = fx.phaser(clip(x)).samples
    assert not np.allclose(y[1000:1400], y[9000:9400])


# ------------------------------------------------------------- shared invariants

LINEAR = [Gain(7.5), Chorus(10, 5), Reverb(), Ladder(), Ladder(900, 0.6), Phaser()]
ALL = LINEAR + [Distortion(20), PitchShift(10)]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.floats(-4, 4).filter(lambda a: abs(a) > 1e-3), st.sampled_from(LINEAR))
def test_linearity(seed, a, effect):
    x = np.random.default_rng(seed).uniform(-1, 1, 3000)
    y1 = effect(clip(a * x)).samples
    y2 = a * effect(clip(x)).samples
    scale = max(np.max(np.abs(y2)), 1e-12)
    assert np.max(np.abs(y1 - y2)) / scale <= 1e-6


@pytest.mark.parametrize("effect", ALL, ids=lambda e: e.name)
def test_deterministic_and_shape_preserving(effect, noise_clip):
    a, b = effect(noise_clip), effect(noise_clip)
    assert np.array_equal(a.samples, b.samples)
    assert len(a) == len(noise_clip) and a.sample_rate == noise_clip.sample_rate
    assert np.all(np.isfinite(a.samples))


@pytest.mark.parametrize("rate", [8000, 22050, 44100])
def test_effects_follow_sample_rate(rate):
    c = AudioClip(np.random.default_rng(rate).standard_normal(rate // 2), rate)
    for effect in ALL:
        assert len(effect(c)) == len(c)
    assert np.flatnonzero(fx.reverb(impulse(rate, rate), Reverb(dry=0)).samples)[0] == fx.freeverb_delays(rate)[0][0]


# -------------------------------------------------------------------------- chain


def test_chain_identity_and_inverse():
    noise_clip = clip(np.random.default_rng(5).uniform(-0.9, 0.9, 4000))
    assert np.array_equal(apply_chain(noise_clip, EffectChain((Gain(0),))).samples, noise_clip.samples)
    y = apply_chain(noise_clip, EffectChain((Gain(6.0206), Gain(-6.0206)))).samples
    assert np.max(np.abs(y - noise_clip.samples)) <= 1e-6


def test_chain_matches_stepwise_composition():
    imp = impulse(4000)
    stepwise = fx.phaser(fx.ladder_hpf(fx.gain(imp, 12)))
    chained = apply_chain(imp, EffectChain((Gain(12), Ladder(), Phaser())))
    raw = stepwise.samples
    expected = raw * (0.95 / np.max(np.abs(raw))) if np.max(np.abs(raw)) > 1 else raw
    np.testing.assert_array_equal(chained.samples, expected)


def test_chain_normalises_only_overshoot():
    loud = apply_chain(clip([0.1, -0.2, 0.05]), EffectChain((Distortion(30),)))
    assert np.max(np.abs(loud.samples)) == pytest.approx(0.95)
    quiet = apply_chain(clip([0.1, -0.2]), EffectChain((Gain(0),)))
    assert np.max(np.abs(quiet.samples)) == pytest.approx(0.2)


def test_empty_chain_rejected():
    with pytest.raises(ValueError):
        EffectChain(())


def test_effect_serialisation_roundtrip():
    chain = EffectChain((PitchShift(10), Distortion(20), Chorus(8, 5), Reverb(), Ladder(), Phaser()))
    assert EffectChain.from_list(chain.to_list()) == chain
    with pytest.raises(ValueError, match="unknown effect"):
        effect_from_dict({"effect": "flanger"})
    with pytest.raises(ValueError, match="unknown chorus parameters"):
        effect_from_dict({"effect": "chorus", "delay": 3})
