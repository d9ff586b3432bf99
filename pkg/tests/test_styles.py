import numpy as np
import pytest

from stylebackdoor.audio import sine
from stylebackdoor.effects import (
    Chorus, Distortion, EffectChain, Gain, Ladder, Phaser, PitchShift, Reverb, apply_chain,
)
from stylebackdoor.styles import N_STYLES, ablation_chain, ablation_levels, style_chain
from tests.conftest import peak_frequency

EXPECTED = {
    0: (PitchShift(10),),
    1: (Distortion(30),),
    2: (Chorus(10, 5),),
    3: (PitchShift(10), Distortion(20), Chorus(8, 5)),
    4: (Chorus(15, 0.25), Distortion(20), Reverb()),
    5: (Gain(12), Ladder(), Phaser()),
}


@pytest.mark.parametrize("style", range(N_STYLES))
def test_style_chains(style):
    chain = style_chain(style)
    assert isinstance(chain, EffectChain)
    assert chain.effects == EXPECTED[style]


@pytest.mark.parametrize("bad", [-1, 6, 2.5, "1", None])
def test_invalid_style(bad):
    with pytest.raises(ValueError):
        style_chain(bad)


def test_style0_moves_440_to_784():
    y = apply_chain(sine(440), style_chain(0)).samples
    assert abs(peak_frequency(y) - 440 * 2 ** (10 / 12)) <= 16000 / 4096


def test_ablation_examples():
    assert ablation_chain(2, 10).effects == (Chorus(10, 10),)
    assert ablation_chain(5, 20).effects == (Gain(20), Ladder(), Phaser())
    assert ablation_chain(2, 5, allow_off_grid=True) == style_chain(2)
    assert ablation_levels(2) == (2, 4, 6, 8, 10)
    assert ablation_levels(5) == (4, 8, 12, 16, 20)


def test_ablation_rejects_off_grid_and_other_styles():
    with pytest.raises(ValueError):
        ablation_chain(2, 5)
    with pytest.raises(ValueError):
        ablation_chain(3, 4)
    with pytest.raises(ValueError):
        ablation_levels(0)


@pytest.mark.parametrize("style", [2, 5])
def test_ablation_changes_only_the_knob(style):
    base = style_chain(style).effects
    for level in ablation_levels(style):
        chain = ablation_chain(style, level).effects
        assert chain[1:] == base[1:]
        assert type(chain[0]) is type(base[0])
        diffs = [k for k in vars(base[0]) if getattr(chain[0], k) != getattr(base[0], k)]
        assert len(diffs) <= 1
