"""The six preset trigger styles and their one-knob ablation variants."""

from __future__ import annotations

import numbers
from dataclasses import replace

from .effects import Chorus, Distortion, EffectChain, Gain, Ladder, Phaser, PitchShift, Reverb

N_STYLES = 6

# Chains list the innermost effect of each nested expression first.
_STYLES = {
    0: (PitchShift(10),),
    1: (Distortion(30),),
    2: (Chorus(10, 5),),
    3: (PitchShift(10), Distortion(20), Chorus(8, 5)),
    4: (Chorus(15, 0.25), Distortion(20), Reverb()),
    5: (Gain(12), Ladder(), Phaser()),
}

# style id -> (effect position, field name, level grid)
ABLATION_KNOBS = {
    2: (0, "amount", (2.0, 4.0, 6.0, 8.0, 10.0)),
    5: (0, "gain_db", (4.0, 8.0, 12.0, 16.0, 20.0)),
}


def _check_id(style_id) -> int:
    if isinstance(style_id, bool) or not isinstance(style_id, numbers.Integral) or not 0 <= style_id < N_STYLES:
        raise ValueError(f"style id must be an integer in 0..{N_STYLES - 1}, got {style_id!r}")
    return int(style_id)


def style_chain(style_id: int) -> EffectChain:
    return EffectChain(_STYLES[_check_id(style_id)])


def ablation_levels(style_id: int) -> tuple:
    style_id = _check_id(style_id)
    if style_id not in ABLATION_KNOBS:
        raise ValueError(f"style {style_id} has no ablation knob; use one of {sorted(ABLATION_KNOBS)}")
    return ABLATION_KNOBS[style_id][2]


def ablation_chain(style_id: int, level: float, allow_off_grid: bool = False) -> EffectChain:
    """Style 2 with chorus amount ``level``, or style 5 with gain ``level`` dB.

    Levels outside the sweep grid are refused unless ``allow_off_grid``.
    """
    grid = ablation_levels(style_id)
    if not allow_off_grid and float(level) not in grid:
        raise ValueError(f"level {level} not in the style-{style_id} grid {list(grid)}")
    position, field, _ = ABLATION_KNOBS[style_id]
    effects = list(_STYLES[style_id])
    effects[position] = replace(effects[position], **{field: float(level)})
    return EffectChain(tuple(effects))
