"""Run the desk-scale grids behind the acceptance checks and print summaries.

Usage: python scripts/desk_grid.py [out_dir] [--epochs N] [--patience N]

Each grid reports into its own subdirectory; all share one runs/ pool with
resume enabled, so a cell that two grids have in common trains once:
  * style 5, dirty-label, rates 0.1/0.5/1 %, small CNN, seeds 0-2
  * styles 2 and 5, clean- and dirty-label at 1 %
  * the style-2 chorus-amount and style-5 gain sweeps (dirty-label, 1 %)
"""

import argparse
import time
from dataclasses import replace

from stylebackdoor import SynthSpec
from stylebackdoor.experiment import ExperimentConfig, Workspace, run_ablation, run_experiment
from stylebackdoor.model import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="results/desk")
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--patience", type=int, default=10)
    ap.add_argument("--cache-dir", default="cache/mfcc")
    args = ap.parse_args()

    base = ExperimentConfig(
        output_dir=f"{args.out}/rates", runs_dir=f"{args.out}/runs", synth=SynthSpec(), styles=(5,), modes=("dirty_label",),
        rates=(0.001, 0.005, 0.01), archs=("small_cnn",), seeds=(0, 1, 2),
        train=TrainConfig(max_epochs=args.epochs, patience=args.patience),
        cache_dir=args.cache_dir, resume=True,
    )
    ws = Workspace(base)
    grids = [
        ("rates", run_experiment, base),
        ("modes", run_experiment, replace(base, output_dir=f"{args.out}/modes", styles=(2, 5), rates=(0.01,),
                                          modes=("clean_label", "dirty_label"))),
        ("ablation", run_ablation, replace(base, output_dir=f"{args.out}/ablation", styles=(2, 5),
                                           rates=(0.01,))),
    ]
    for name, fn, cfg in grids:
        t0 = time.time()
        result = fn(cfg, ws)
        print(f"== {name} ({time.time() - t0:.0f} s)")
        for row in result.summary:
            keys = [k for k in ("style", "level", "mode", "rate") if k in row]
            head = " ".join(f"{k}={row[k]}" for k in keys)
            print(f"  {head}: ASR {row['asr_mean']:.3f} +/- {row['asr_std']:.3f}, "
                  f"drop {row['clean_drop_mean']:+.2f} pp")


if __name__ == "__main__":
    main()
