"""Render one synthetic clip per class through all six trigger styles.

Usage: python scripts/render_styles.py [out_dir]

Writes ``<class>_clean.wav`` and ``<class>_style<k>.wav`` for listening
and prints how far each style moves the MFCCs (mean absolute difference).
"""

import sys
from pathlib import Path

import numpy as np

from stylebackdoor import SynthSpec, apply_chain, style_chain, synth_dataset, write_wav
from stylebackdoor.features import mfcc
from stylebackdoor.styles import N_STYLES


def main(out="style_demo"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ds = synth_dataset(SynthSpec(samples_per_class=1))
    shift = np.zeros(N_STYLES)
    for clip, label in zip(ds.clips, ds.labels):
        name = ds.classes[label]
        write_wav(clip, out / f"{name}_clean.wav")
        base = mfcc(clip)
        for k in range(N_STYLES):
            styled = apply_chain(clip, style_chain(k))
            write_wav(styled, out / f"{name}_style{k}.wav")
            shift[k] += np.mean(np.abs(mfcc(styled) - base)) / len(ds)
    for k in range(N_STYLES):
        print(f"style {k}: mean |dMFCC| = {shift[k]:.3f}")
    print(f"wrote {len(ds) * (N_STYLES + 1)} files to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
