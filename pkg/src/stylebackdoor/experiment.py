"""Experiment grids: split, poison, featurise, train, evaluate, report.

A grid cell is one training run. Clean baselines (one per arch and seed)
supply the reference F1 for the clean-accuracy drop and the evasion rate
of each style. Everything is a deterministic function of the config, so a
rerun rewrites ``results.csv`` byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import model as nn
from .audio import AudioClip, Dataset, SynthSpec, load_dataset_dir, synth_dataset
from .effects import EffectChain, apply_chain
from .features import FeatureCache, FeatureStats, MfccConfig, fit_frames, normalize_features
from .metrics import attack_success_rate, clean_accuracy_drop, evasion_rate, f1_macro
from .poison import PoisonMode, PoisonPlan, apply_poison, plan_poison, split, stylize_test_set
from .styles import ABLATION_KNOBS, N_STYLES, ablation_chain, ablation_levels, style_chain

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("style", "mode", "rate", "arch", "seed", "clean_f1", "asr",
                  "clean_drop_pp", "evasion_rate", "epochs_trained")
ABLATION_COLUMNS = ("style", "level", "mode", "rate", "arch", "seed", "clean_f1", "asr",
                    "clean_drop_pp", "epochs_trained")
DEFAULT_RATES = (0.001, 0.005, 0.01)
DEFAULT_SEEDS = (0, 1, 2, 3)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    output_dir: str
    dataset_dir: str | None = None
    synth: SynthSpec | None = None
    styles: tuple = tuple(range(N_STYLES))
    modes: tuple = ("clean_label", "dirty_label")
    rates: tuple = DEFAULT_RATES
    archs: tuple = ("small_cnn",)
    seeds: tuple = DEFAULT_SEEDS
    train: nn.TrainConfig = nn.TrainConfig()
    target_class: int | str | None = None
    clip_seconds: float = 1.0
    levels: tuple | None = None
    cache_dir: str | None = None
    jobs: int = 1
    resume: bool = False
    runs_dir: str | None = None

    def __post_init__(self):
        if (self.dataset_dir is None) == (self.synth is None):
            raise ConfigError("give exactly one of dataset_dir or synth")
        for name in ("styles", "modes", "rates", "archs", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigError(f"{name} must be non-empty")
            object.__setattr__(self, name, value)
        for s in self.styles:
            if s not in range(N_STYLES):
                raise ConfigError(f"unknown style {s}")
        for m in self.modes:
            try:
                PoisonMode(m)
            except ValueError:
                raise ConfigError(f"unknown poison mode {m!r}") from None
        for a in self.archs:
            if a not in nn.ARCHITECTURES:
                raise ConfigError(f"unknown architecture {a!r}")
        for r in self.rates:
            if not 0 < r <= 0.05:
                raise ConfigError(f"poisoning rate {r} outside (0, 0.05]")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def grid_size(self) -> int:
        return len(self.styles) * len(self.modes) * len(self.rates) * len(self.archs) * len(self.seeds)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "output_dir" not in d:
            raise ConfigError("missing required key 'output_dir'")
        try:
            if isinstance(d.get("synth"), dict):
                d["synth"] = _strict(SynthSpec, d["synth"], "synth")
            if isinstance(d.get("train"), dict):
                d["train"] = _strict(nn.TrainConfig, d["train"], "train")
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return asdict(self)


def _strict(cls, d, section):
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**d)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(raw)


# -------------------------------------------------------------------------- corpus


class Workspace:
    """Dataset, splits, stylised-clip memo and feature cache shared by a grid."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        if config.dataset_dir is not None:
            if not Path(config.dataset_dir).is_dir():
                raise ConfigError(f"dataset directory not found: {config.dataset_dir}")
            self.dataset = load_dataset_dir(config.dataset_dir, config.clip_seconds)
        else:
            self.dataset = synth_dataset(config.synth)
        self.target = resolve_target(self.dataset, config.target_class)
        self.features = FeatureCache(config.cache_dir, MfccConfig())
        self._styled: dict = {}
        self._splits: dict = {}
        self.frames = self._modal_frames()
        self.digest = dataset_digest(self.dataset)

    def _modal_frames(self) -> int:
        counts: dict = {}
        for clip in self.dataset.clips:
            counts[len(clip)] = counts.get(len(clip), 0) + 1
        length = max(sorted(counts), key=lambda k: counts[k])
        probe = AudioClip(np.zeros(length), self.dataset.clips[0].sample_rate)
        return self.features.get(probe).shape[1]

    def serves(self, config: ExperimentConfig) -> bool:
        mine = self.config
        return (mine.dataset_dir, mine.synth, mine.clip_seconds, mine.target_class, mine.cache_dir) == (
            config.dataset_dir, config.synth, config.clip_seconds, config.target_class, config.cache_dir)

    def split(self, seed: int):
        if seed not in self._splits:
            self._splits[seed] = split(self.dataset, seed)
        return self._splits[seed]

    def stylize(self, clip: AudioClip, chain: EffectChain) -> AudioClip:
        key = (clip.content_hash(), chain.key())
        if key not in self._styled:
            self._styled[key] = apply_chain(clip, chain)
        return self._styled[key]

    def matrices(self, ds: Dataset) -> np.ndarray:
        return np.stack([fit_frames(self.features.get(c), self.frames) for c in ds.clips])


def dataset_digest(dataset: Dataset) -> str:
    h = hashlib.sha256(json.dumps(list(dataset.classes)).encode())
    for clip, label in zip(dataset.clips, dataset.labels):
        h.update(f"{clip.content_hash()}:{clip.sample_rate}:{label};".encode())
    return h.hexdigest()


def resolve_target(dataset: Dataset, target) -> int:
    if target is None:
        return dataset.classes.index("yes") if "yes" in dataset.classes else 0
    if isinstance(target, str):
        if target not in dataset.classes:
            raise ConfigError(f"target class {target!r} not among {list(dataset.classes)}")
        return dataset.classes.index(target)
    if not 0 <= target < len(dataset.classes):
        raise ConfigError(f"target class {target} out of range")
    return int(target)


def normalize_all(x: np.ndarray, stats: FeatureStats) -> np.ndarray:
    return np.stack([normalize_features(m, stats) for m in x]).astype(np.float32)


# ---------------------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    arch: str
    seed: int
    style: int | None = None
    mode: str | None = None
    rate: float = 0.0
    level: float | None = None

    @property
    def is_baseline(self) -> bool:
        return self.style is None

    @property
    def run_id(self) -> str:
        if self.is_baseline:
            return f"clean_{self.arch}_s{self.seed}"
        lvl = "" if self.level is None else f"_l{self.level:g}"
        return f"style{self.style}{lvl}_{self.mode}_r{self.rate:g}_{self.arch}_s{self.seed}"

    def chain(self) -> EffectChain:
        if self.level is not None:
            return ablation_chain(self.style, self.level, allow_off_grid=True)
        return style_chain(self.style)


def _fingerprint(ws: Workspace, cfg: ExperimentConfig, cell: Cell) -> str:
    """Everything a run's outcome depends on, hashed."""
    blob = {
        "cell": asdict(cell),
        "train": asdict(replace(cfg.train, seed=cell.seed)),
        "dataset": ws.digest,
        "target": ws.target,
        "frames": ws.frames,
        "mfcc": ws.features.config.digest(),
        "chain": cell.chain().to_list() if not cell.is_baseline else None,
    }
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()


def _reusable(ws: Workspace, cfg: ExperimentConfig, cell: Cell, styles_for_evasion, run_dir: Path):
    """Metrics of a finished run with a matching fingerprint, else None."""
    path = run_dir / "manifest.json"
    if not (path.exists() and (run_dir / "checkpoint.bin").exists()):
        return None
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    if manifest.get("fingerprint") != _fingerprint(ws, cfg, cell):
        return None
    metrics = dict(manifest["metrics"])
    if cell.is_baseline:
        evasion = {int(k): v for k, v in metrics.pop("evasion", {}).items()}
        if not set(styles_for_evasion) <= set(evasion):
            return None
        metrics["evasion"] = evasion
    return metrics


def _run_cell(ws: Workspace, cfg: ExperimentConfig, cell: Cell, styles_for_evasion, run_dir: Path) -> dict:
    if cfg.resume:
        done = _reusable(ws, cfg, cell, styles_for_evasion, run_dir)
        if done is not None:
            log.info("reusing %s", cell.run_id)
            return done
    train_ds, val_ds, test_ds = ws.split(cell.seed)
    plan = None
    if not cell.is_baseline:
        chain = cell.chain()
        plan = plan_poison(train_ds, cell.mode, ws.target, cell.rate, cell.seed)
        train_ds = apply_poison(train_ds, plan, chain, stylize=ws.stylize)

    x_train = ws.matrices(train_ds)
    stats = FeatureStats.fit(list(x_train))
    train_cfg = replace(cfg.train, seed=cell.seed)
    params, history = nn.train(
        cell.arch, normalize_all(x_train, stats), train_ds.labels,
        normalize_all(ws.matrices(val_ds), stats), val_ds.labels,
        train_cfg, n_classes=len(ws.dataset.classes),
    )
    x_test = normalize_all(ws.matrices(test_ds), stats)
    result = {
        "clean_f1": f1_macro(nn.predict(params, x_test), test_ds.labels),
        "epochs": len(history),
    }
    if cell.is_baseline:
        result["evasion"] = {}
        for s in styles_for_evasion:
            styled = stylize_test_set(test_ds, ws.target, style_chain(s), stylize=ws.stylize)
            if len(styled):
                preds = nn.predict(params, normalize_all(ws.matrices(styled), stats))
                result["evasion"][s] = evasion_rate(preds, styled.labels)
    else:
        styled = stylize_test_set(test_ds, ws.target, cell.chain(), stylize=ws.stylize)
        preds = nn.predict(params, normalize_all(ws.matrices(styled), stats))
        result["asr"] = attack_success_rate(preds, ws.target)

    run_dir.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(run_dir / "checkpoint.bin", params)
    (run_dir / "history.csv").write_text(history.to_csv())
    manifest = {
        "cell": asdict(cell),
        "fingerprint": _fingerprint(ws, cfg, cell),
        "target_class": ws.target,
        "train": asdict(train_cfg),
        "frames": ws.frames,
        "stats": {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
        "poison": plan.to_manifest() if plan else None,
        "chain": cell.chain().to_list() if not cell.is_baseline else None,
        "metrics": {k: v for k, v in result.items() if k != "evasion"},
    }
    if cell.is_baseline:
        manifest["metrics"]["evasion"] = {str(k): v for k, v in result["evasion"].items()}
    _atomic_write(run_dir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return result


_WORKER: tuple | None = None


def _worker_init(config):
    global _WORKER
    _WORKER = (Workspace(config), config)


def _worker_run(args):
    cell, styles, run_dir = args
    ws, config = _WORKER
    return _safe_run(ws, config, cell, styles, run_dir)


def _safe_run(ws, config, cell, styles, run_dir):
    try:
        log.info("running %s", cell.run_id)
        return cell, _run_cell(ws, config, cell, styles, run_dir), None
    except Exception as e:  # a failed cell is recorded, the grid goes on
        log.error("cell %s failed: %s", cell.run_id, e)
        return cell, None, f"{type(e).__name__}: {e}\n{traceback.format_exc()}"


def _execute(config: ExperimentConfig, cells, styles_for_evasion, ws: Workspace | None = None):
    out = Path(config.runs_dir) if config.runs_dir else Path(config.output_dir) / "runs"
    jobs = [(c, styles_for_evasion, out / c.run_id) for c in cells]
    if config.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_worker_init, initargs=(config,)) as pool:
            outcomes = list(pool.map(_worker_run, jobs))
    else:
        ws = ws or Workspace(config)
        outcomes = [_safe_run(ws, config, *job) for job in jobs]
    results, failures = {}, {}
    for cell, result, err in outcomes:
        if err is None:
            results[cell] = result
        else:
            failures[cell.run_id] = err
    return results, failures


# ------------------------------------------------------------------------- reports


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    return statistics.fmean(values), (statistics.pstdev(values) if len(values) > 1 else 0.0)


def _sort_key(value):
    # numbers (also as CSV strings) order numerically and ahead of text
    try:
        return (0, float(value), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(value))


def aggregate(rows, keys) -> list:
    """Mean and population std of ASR and clean drop per group of ``keys``."""
    groups: dict = {}
    for r in rows:
        if r.get("asr") in (None, ""):
            continue
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in sorted(groups.items(), key=lambda kv: tuple(_sort_key(x) for x in kv[0])):
        asr_m, asr_s = _mean_std([float(m["asr"]) for m in members])
        drop_m, drop_s = _mean_std([float(m["clean_drop_pp"]) for m in members
                                    if m.get("clean_drop_pp") not in (None, "")])
        out.append({**dict(zip(keys, key)), "n": len(members), "asr_mean": asr_m, "asr_std": asr_s,
                    "clean_drop_mean": drop_m, "clean_drop_std": drop_s})
    return out


@dataclass
class ExperimentResult:
    output_dir: Path
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def _write_failures(out: Path, failures: dict):
    path = out / "failures.json"
    if failures:
        _atomic_write(path, json.dumps(failures, indent=1, sort_keys=True) + "\n")
    elif path.exists():
        path.unlink()


def _baseline_cells(config):
    return [Cell(a, s) for a in config.archs for s in config.seeds]


def run_experiment(config: ExperimentConfig, workspace: Workspace | None = None) -> ExperimentResult:
    """Every (style, mode, rate, arch, seed) cell plus one clean baseline per (arch, seed).

    Writes ``results.csv`` (one row per cell and baseline), ``summary.csv``
    (mean/std ASR per style, mode, rate, arch), ``config.json`` and per-run
    manifests under ``runs/``.
    """
    out = Path(config.output_dir)
    ws = _workspace_for(config, workspace)
    if ws is None:
        _check_dataset(config)
    baselines = _baseline_cells(config)
    poisoned = [Cell(a, s, st, m, r) for st in config.styles for m in config.modes
                for r in config.rates for a in config.archs for s in config.seeds]
    results, failures = _execute(config, baselines + poisoned, config.styles, ws)

    rows = []
    for b in baselines:
        if b in results:
            res = results[b]
            rows.append(dict(style=None, mode="clean", rate=0.0, arch=b.arch, seed=b.seed,
                             clean_f1=res["clean_f1"], asr=None, clean_drop_pp=None,
                             evasion_rate=None, epochs_trained=res["epochs"]))
    for c in poisoned:
        if c not in results:
            continue
        res = results[c]
        base = results.get(Cell(c.arch, c.seed))
        rows.append(dict(
            style=c.style, mode=c.mode, rate=c.rate, arch=c.arch, seed=c.seed,
            clean_f1=res["clean_f1"], asr=res["asr"],
            clean_drop_pp=clean_accuracy_drop(res["clean_f1"], base["clean_f1"]) if base else None,
            evasion_rate=base["evasion"].get(c.style) if base else None,
            epochs_trained=res["epochs"],
        ))

    summary = aggregate(rows, ("style", "mode", "rate", "arch"))
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "config.json", json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    _atomic_write(out / "results.csv", _csv_text(RESULT_COLUMNS, rows))
    _atomic_write(out / "summary.csv", _csv_text(
        ("style", "mode", "rate", "arch", "n", "asr_mean", "asr_std", "clean_drop_mean", "clean_drop_std"),
        summary))
    _write_failures(out, failures)
    return ExperimentResult(out, rows, summary, failures)


def run_ablation(config: ExperimentConfig, workspace: Workspace | None = None) -> ExperimentResult:
    """Sweep the one-knob level of styles 2 (chorus amount) and 5 (gain dB).

    Writes ``ablation.csv`` (one row per level, mode, rate, arch, seed) and
    ``ablation_summary.csv`` (mean/std ASR per level).
    """
    bad = [s for s in config.styles if s not in ABLATION_KNOBS]
    if bad:
        raise ConfigError(f"ablation supports styles {sorted(ABLATION_KNOBS)}, got {bad}")
    out = Path(config.output_dir)
    ws = _workspace_for(config, workspace)
    if ws is None:
        _check_dataset(config)
    baselines = _baseline_cells(config)
    cells = []
    for st in config.styles:
        levels = config.levels if config.levels is not None else ablation_levels(st)
        for lvl in levels:
            ablation_chain(st, lvl, allow_off_grid=config.levels is not None)
            cells += [Cell(a, s, st, m, r, float(lvl)) for m in config.modes
                      for r in config.rates for a in config.archs for s in config.seeds]
    results, failures = _execute(config, baselines + cells, (), ws)

    rows = []
    for c in cells:
        if c not in results:
            continue
        base = results.get(Cell(c.arch, c.seed))
        res = results[c]
        rows.append(dict(
            style=c.style, level=c.level, mode=c.mode, rate=c.rate, arch=c.arch, seed=c.seed,
            clean_f1=res["clean_f1"], asr=res["asr"],
            clean_drop_pp=clean_accuracy_drop(res["clean_f1"], base["clean_f1"]) if base else None,
            epochs_trained=res["epochs"],
        ))
    summary = aggregate(rows, ("style", "level", "mode", "rate", "arch"))
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "ablation_config.json", json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    _atomic_write(out / "ablation.csv", _csv_text(ABLATION_COLUMNS, rows))
    _atomic_write(out / "ablation_summary.csv", _csv_text(
        ("style", "level", "mode", "rate", "arch", "n", "asr_mean", "asr_std",
         "clean_drop_mean", "clean_drop_std"), summary))
    _write_failures(out, failures)
    return ExperimentResult(out, rows, summary, failures)


def run_evasion(config: ExperimentConfig, workspace: Workspace | None = None) -> ExperimentResult:
    """Train clean models only and measure how often each style fools them."""
    out = Path(config.output_dir)
    ws = _workspace_for(config, workspace)
    if ws is None:
        _check_dataset(config)
    baselines = _baseline_cells(config)
    results, failures = _execute(config, baselines, config.styles, ws)
    rows = []
    for b in baselines:
        if b not in results:
            continue
        for s in config.styles:
            rows.append(dict(style=s, arch=b.arch, seed=b.seed, clean_f1=results[b]["clean_f1"],
                             evasion_rate=results[b]["evasion"].get(s)))
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "evasion.csv", _csv_text(("style", "arch", "seed", "clean_f1", "evasion_rate"), rows))
    _write_failures(out, failures)
    return ExperimentResult(out, rows, [], failures)


def _workspace_for(config: ExperimentConfig, workspace: Workspace | None) -> Workspace | None:
    """Reuse a caller's workspace when it holds the same corpus; grids with jobs > 1 build their own."""
    if workspace is not None:
        if not workspace.serves(config):
            raise ConfigError("workspace was built for a different dataset or target")
        return workspace
    return Workspace(config) if config.jobs == 1 else None


def _check_dataset(config):
    if config.dataset_dir is not None and not Path(config.dataset_dir).is_dir():
        raise ConfigError(f"dataset directory not found: {config.dataset_dir}")


def recompute_run(run_dir, workspace: Workspace) -> dict:
    """Re-derive a run's metrics from its manifest and checkpoint alone."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cell = Cell(**manifest["cell"])
    params = nn.load_checkpoint(run_dir / "checkpoint.bin")
    stats = FeatureStats(np.array(manifest["stats"]["mean"]), np.array(manifest["stats"]["std"]))
    _, _, test_ds = workspace.split(cell.seed)
    target = manifest["target_class"]
    x_test = normalize_all(workspace.matrices(test_ds), stats)
    metrics = {"clean_f1": f1_macro(nn.predict(params, x_test), test_ds.labels)}
    if not cell.is_baseline:
        chain = EffectChain.from_list(manifest["chain"])
        styled = stylize_test_set(test_ds, target, chain, stylize=workspace.stylize)
        preds = nn.predict(params, normalize_all(workspace.matrices(styled), stats))
        metrics["asr"] = attack_success_rate(preds, target)
        plan = PoisonPlan.from_manifest(manifest["poison"])
        metrics["poisoned"] = len(plan.selected)
    return metrics


# --------------------------------------------------------------------- file tools


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def stylize_files(input_dir, style: int, output_dir) -> tuple[int, list]:
    """Stylise every WAV in ``input_dir`` into ``output_dir`` as ``<stem>_style<k>.wav``.

    Writes ``manifest.csv`` (input, input_sha256, output, output_sha256).
    Returns the number of files written and a list of per-file errors.
    """
    from .audio import read_wav, write_wav

    chain = style_chain(style)
    src = Path(input_dir)
    dst = Path(output_dir)
    if not src.is_dir():
        raise ConfigError(f"input directory not found: {src}")
    dst.mkdir(parents=True, exist_ok=True)
    rows, errors = [], []
    for path in sorted(src.glob("*.wav")):
        target = dst / f"{path.stem}_style{style}.wav"
        try:
            write_wav(apply_chain(read_wav(path), chain), target)
        except Exception as e:  # keep going; report at the end
            log.error("%s: %s", path.name, e)
            errors.append((path.name, str(e)))
            continue
        rows.append({"input": path.name, "input_sha256": file_sha256(path),
                     "output": target.name, "output_sha256": file_sha256(target)})
    _atomic_write(dst / "manifest.csv", _csv_text(("input", "input_sha256", "output", "output_sha256"), rows))
    return len(rows), errors


def export_dataset(dataset: Dataset, output_dir) -> int:
    """Write a dataset as class-per-directory 16-bit WAVs."""
    from .audio import write_wav

    out = Path(output_dir)
    counters: dict = {}
    for clip, label in zip(dataset.clips, dataset.labels):
        name = dataset.classes[label]
        k = counters.get(name, 0)
        counters[name] = k + 1
        (out / name).mkdir(parents=True, exist_ok=True)
        write_wav(clip, out / name / f"{name}_{k:05d}.wav")
    return len(dataset)
