"""Stylistic backdoor attacks on audio classifiers via guitar-effect triggers."""

from .audio import AudioClip, Dataset, SynthSpec, clip_to_length, read_wav, synth_dataset, write_wav
from .effects import EffectChain, apply_chain
from .styles import ablation_chain, style_chain

__all__ = [
    "AudioClip",
    "Dataset",
    "EffectChain",
    "SynthSpec",
    "ablation_chain",
    "apply_chain",
    "clip_to_length",
    "read_wav",
    "style_chain",
    "synth_dataset",
    "write_wav",
]
