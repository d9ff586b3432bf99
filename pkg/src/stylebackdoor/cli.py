"""Command-line entry point: ``stylebackdoor <subcommand>``.

Exit codes: 0 success, 1 configuration error, 2 some grid cells failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import SynthSpec, load_dataset_dir, read_wav, synth_dataset
from .experiment import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    export_dataset,
    load_config,
    run_ablation,
    run_evasion,
    run_experiment,
    stylize_files,
)
from .features import FeatureCache, MfccConfig, write_matrix

log = logging.getLogger("stylebackdoor")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _with_globals(config: ExperimentConfig, args) -> ExperimentConfig:
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.cache_dir is not None:
        overrides["cache_dir"] = args.cache_dir
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    return replace(config, **overrides) if overrides else config


def cmd_synth(args) -> int:
    spec = SynthSpec(n_classes=args.classes, samples_per_class=args.per_class,
                     duration_s=args.duration, seed=args.seed or 0)
    out = args.out or "synth_corpus"
    n = export_dataset(synth_dataset(spec), out)
    print(f"wrote {n} clips to {out}")
    return EXIT_OK


def cmd_stylize(args) -> int:
    out = args.out or f"{args.input}_style{args.style}"
    n, errors = stylize_files(args.input, args.style, out)
    print(f"stylised {n} files into {out}")
    for name, msg in errors:
        print(f"  failed: {name}: {msg}", file=sys.stderr)
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_features(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise ConfigError(f"input directory not found: {src}")
    out = Path(args.out or f"{args.input}_mfcc")
    cache = FeatureCache(args.cache_dir, MfccConfig())
    n = 0
    for path in sorted(src.rglob("*.wav")):
        target = out / path.relative_to(src).with_suffix(".mfcc")
        write_matrix(target, cache.get(read_wav(path)))
        n += 1
    print(f"wrote {n} feature files to {out}")
    return EXIT_OK


def _load(args) -> ExperimentConfig:
    return _with_globals(load_config(args.config), args)


def _report_grid(result) -> int:
    for row in result.summary:
        print(_summary_line(row))
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed; see {result.output_dir / 'failures.json'}",
              file=sys.stderr)
    return result.exit_code


def _summary_line(row) -> str:
    head = " ".join(f"{k}={row[k]}" for k in row if k not in
                    ("n", "asr_mean", "asr_std", "clean_drop_mean", "clean_drop_std"))
    asr_m, asr_s = float(row["asr_mean"]), float(row["asr_std"])
    drop = row.get("clean_drop_mean")
    drop_txt = "" if drop in (None, "") else f"  drop {float(drop):+.2f} pp"
    return f"{head}  n={row['n']}  ASR {100 * asr_m:5.1f} +/- {100 * asr_s:4.1f}%{drop_txt}"


def cmd_run(args) -> int:
    return _report_grid(run_experiment(_load(args)))


def cmd_ablate(args) -> int:
    return _report_grid(run_ablation(_load(args)))


def cmd_evade(args) -> int:
    result = run_evasion(_load(args))
    by_style: dict = {}
    for r in result.rows:
        if r["evasion_rate"] is not None:
            by_style.setdefault((r["style"], r["arch"]), []).append(r["evasion_rate"])
    for (style, arch), vals in sorted(by_style.items()):
        print(f"style={style} arch={arch}  evasion {100 * np.mean(vals):5.1f} +/- {100 * np.std(vals):4.1f}%")
    return result.exit_code


def cmd_report(args) -> int:
    out = Path(args.out or args.results)
    results = out / "results.csv" if out.is_dir() else out
    if not results.exists():
        raise ConfigError(f"no results file at {results}")
    with open(results, newline="") as f:
        rows = list(csv.DictReader(f))
    keys = ("style", "level", "mode", "rate", "arch") if "level" in rows[0] else ("style", "mode", "rate", "arch")
    for row in aggregate(rows, keys):
        print(_summary_line(row))
    baselines = [float(r["clean_f1"]) for r in rows if r.get("mode") == "clean"]
    if baselines:
        print(f"clean baselines: F1 {100 * np.mean(baselines):.1f} +/- {100 * np.std(baselines):.1f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the seed list / synth seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--cache-dir", default=None, help="feature cache directory")
    common.add_argument("--jobs", type=int, default=None, help="concurrent grid cells")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stylebackdoor", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic class-per-directory corpus")
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--per-class", type=int, default=200)
    s.add_argument("--duration", type=float, default=1.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("stylize", parents=[common], help="apply a trigger style to a directory of WAVs")
    s.add_argument("input")
    s.add_argument("--style", type=int, required=True, choices=range(6))
    s.set_defaults(func=cmd_stylize)

    s = sub.add_parser("features", parents=[common], help="extract MFCC files for a WAV tree")
    s.add_argument("input")
    s.set_defaults(func=cmd_features)

    for name, func, text in (("run", cmd_run, "run a poisoning grid"),
                             ("ablate", cmd_ablate, "sweep style 2/5 trigger strength"),
                             ("evade", cmd_evade, "evasion rate of styles on clean models")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("config", help="JSON experiment config")
        s.set_defaults(func=func)

    s = sub.add_parser("report", parents=[common], help="summarise a results directory or CSV")
    s.add_argument("results", nargs="?", default=".")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
