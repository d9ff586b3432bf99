import csv
import json

import numpy as np
import pytest

from stylebackdoor.audio import SynthSpec, read_wav, sine, write_wav
from stylebackdoor.cli import main
from stylebackdoor.experiment import (
    RESULT_COLUMNS,
    ConfigError,
    aggregate,
    ExperimentConfig,
    Workspace,
    load_config,
    recompute_run,
    run_ablation,
    run_experiment,
    stylize_files,
)
from stylebackdoor.model import TrainConfig
from tests.conftest import peak_frequency

TINY = dict(
    synth=dict(n_classes=3, samples_per_class=10, duration_s=0.3, seed=1),
    styles=[1, 5],
    modes=["clean_label", "dirty_label"],
    rates=[0.05],
    archs=["mlp"],
    seeds=[0, 1],
    train=dict(max_epochs=3, patience=1, batch_size=8),
)


def tiny_config(tmp_path, **overrides):
    d = {**TINY, "output_dir": str(tmp_path / "out"), **overrides}
    return ExperimentConfig.from_dict(d)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("grid")
    cfg = tiny_config(tmp)
    return cfg, run_experiment(cfg)


def test_grid_size_arithmetic():
    cfg = ExperimentConfig(output_dir="x", synth=SynthSpec(), styles=range(6),
                           modes=("clean_label", "dirty_label"), rates=(0.001, 0.005, 0.01))
    assert cfg.grid_size == 144 and len(cfg.seeds) == 4


def test_results_have_one_row_per_cell(tiny_run):
    cfg, result = tiny_run
    rows = read_rows(cfg.output_dir + "/results.csv")
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == cfg.grid_size + len(cfg.seeds) * len(cfg.archs)
    keys = [(r["style"], r["mode"], r["rate"], r["arch"], r["seed"]) for r in rows]
    assert len(set(keys)) == len(keys)
    baselines = [r for r in rows if r["mode"] == "clean"]
    assert len(baselines) == 2 and all(r["asr"] == "" for r in baselines)
    for r in rows:
        if r["mode"] != "clean":
            assert 0 <= float(r["asr"]) <= 1 and r["evasion_rate"] != ""
    assert result.exit_code == 0 and not result.failures


def test_summary_and_manifests(tiny_run):
    cfg, result = tiny_run
    summary = read_rows(cfg.output_dir + "/summary.csv")
    assert len(summary) == 4 and all(r["n"] == "2" for r in summary)
    manifest = json.loads(next((result.output_dir / "runs").glob("style5_dirty*_s0/manifest.json")).read_text())
    assert manifest["poison"]["relabel"] is True and manifest["poison"]["mode"] == "dirty_label"
    assert json.loads((result.output_dir / "config.json").read_text())["seeds"] == [0, 1]


def test_rows_recompute_from_manifest_and_checkpoint(tiny_run):
    cfg, result = tiny_run
    ws = Workspace(cfg)
    rows = read_rows(cfg.output_dir + "/results.csv")
    for r in rows:
        if r["mode"] == "clean":
            run = f"clean_{r['arch']}_s{r['seed']}"
        else:
            run = f"style{r['style']}_{r['mode']}_r{float(r['rate']):g}_{r['arch']}_s{r['seed']}"
        m = recompute_run(result.output_dir / "runs" / run, ws)
        assert f"{m['clean_f1']:.6f}" == r["clean_f1"]
        if r["asr"]:
            assert f"{m['asr']:.6f}" == r["asr"]


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, _ = tiny_run
    again = run_experiment(tiny_config(tmp_path))
    first = open(cfg.output_dir + "/results.csv", "rb").read()
    assert (again.output_dir / "results.csv").read_bytes() == first


def test_resume_reuses_matching_runs(tiny_run, tmp_path):
    cfg, _ = tiny_run
    out = tmp_path / "resume"
    first = run_experiment(tiny_config(tmp_path, output_dir=str(out), resume=True))
    stamp = (out / "runs" / "clean_mlp_s0" / "checkpoint.bin").stat().st_mtime_ns
    second = run_experiment(tiny_config(tmp_path, output_dir=str(out), resume=True))
    assert (out / "runs" / "clean_mlp_s0" / "checkpoint.bin").stat().st_mtime_ns == stamp
    assert (out / "results.csv").read_bytes() == open(cfg.output_dir + "/results.csv", "rb").read()
    assert second.rows == first.rows
    changed = tiny_config(tmp_path, output_dir=str(out), resume=True,
                          train=dict(max_epochs=4, patience=1, batch_size=8))
    run_experiment(changed)
    assert (out / "runs" / "clean_mlp_s0" / "checkpoint.bin").stat().st_mtime_ns != stamp


def test_ablation_grid(tmp_path):
    cfg = tiny_config(tmp_path, styles=[2], modes=["dirty_label"], seeds=[0])
    res = run_ablation(cfg)
    rows = read_rows(tmp_path / "out" / "ablation.csv")
    assert [float(r["level"]) for r in rows] == [2, 4, 6, 8, 10]
    assert res.exit_code == 0
    one = tiny_config(tmp_path, styles=[5], modes=["dirty_label"], seeds=[0], levels=[12],
                      output_dir=str(tmp_path / "one"))
    assert len(run_ablation(one).rows) == 1
    with pytest.raises(ConfigError):
        run_ablation(tiny_config(tmp_path, styles=[3]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failed_cells_are_recorded(tmp_path):
    # a divergent optimiser fails every cell; the grid still finishes and reports them
    cfg = tiny_config(tmp_path, synth=dict(n_classes=3, samples_per_class=10, duration_s=0.3),
                      rates=[0.05], modes=["clean_label"], styles=[5],
                      train=dict(max_epochs=3, patience=1, batch_size=8, learning_rate=1e30,
                                 optimizer="sgd_momentum"))
    res = run_experiment(cfg)
    assert res.exit_code == 2 and res.failures
    assert (tmp_path / "out" / "failures.json").exists()


# ----------------------------------------------------------------------- configs


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        tiny_config(tmp_path, stlyes=[1])
    with pytest.raises(ConfigError, match=r"\[train\]"):
        tiny_config(tmp_path, train=dict(epochs=3))
    with pytest.raises(ConfigError):
        tiny_config(tmp_path, rates=[0.2])
    with pytest.raises(ConfigError):
        tiny_config(tmp_path, styles=[])
    with pytest.raises(ConfigError):
        tiny_config(tmp_path, archs=["lstm"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"output_dir": "x"})
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")


def test_config_roundtrip(tmp_path):
    cfg = tiny_config(tmp_path)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_shipped_example_config_parses():
    from pathlib import Path
    cfg = load_config(Path(__file__).parent.parent / "configs" / "example.json")
    assert cfg.grid_size > 0


# --------------------------------------------------------------------------- CLI


def write_json(path, d):
    path.write_text(json.dumps(d))
    return path


def test_cli_run_and_report(tmp_path, capsys):
    conf = write_json(tmp_path / "c.json", {**TINY, "output_dir": str(tmp_path / "o"), "seeds": [0]})
    assert main(["run", str(conf)]) == 0
    assert "ASR" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "o")]) == 0
    assert "clean baselines" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    missing = write_json(tmp_path / "m.json", {**TINY, "synth": None, "dataset_dir": str(tmp_path / "nope"),
                                               "output_dir": str(tmp_path / "o")})
    assert main(["run", str(missing)]) == 1
    assert not (tmp_path / "o").exists()
    typo = write_json(tmp_path / "t.json", {**TINY, "output_dir": "o", "sedes": [1]})
    assert main(["run", str(typo)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_cli_global_flags_override(tmp_path):
    conf = write_json(tmp_path / "c.json", {**TINY, "output_dir": str(tmp_path / "ignored"), "styles": [1],
                                            "modes": ["dirty_label"]})
    assert main(["run", str(conf), "--out", str(tmp_path / "o2"), "--seed", "3",
                 "--cache-dir", str(tmp_path / "cache")]) == 0
    rows = read_rows(tmp_path / "o2" / "results.csv")
    assert {r["seed"] for r in rows} == {"3"}
    assert any((tmp_path / "cache").rglob("*.mfcc"))
    assert not (tmp_path / "ignored").exists()


def test_cli_ablate_and_evade(tmp_path):
    conf = write_json(tmp_path / "a.json", {**TINY, "output_dir": str(tmp_path / "a"), "styles": [5],
                                            "modes": ["dirty_label"], "seeds": [0], "levels": [4, 20]})
    assert main(["ablate", str(conf)]) == 0
    assert len(read_rows(tmp_path / "a" / "ablation.csv")) == 2
    conf = write_json(tmp_path / "e.json", {**TINY, "output_dir": str(tmp_path / "e"), "seeds": [0]})
    assert main(["evade", str(conf)]) == 0
    assert len(read_rows(tmp_path / "e" / "evasion.csv")) == 2


def test_cli_synth_features_and_stylize(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["synth", "--classes", "2", "--per-class", "3", "--duration", "0.2", "--out", str(corpus)]) == 0
    assert len(list(corpus.rglob("*.wav"))) == 6
    assert main(["features", str(corpus), "--out", str(tmp_path / "feat")]) == 0
    assert len(list((tmp_path / "feat").rglob("*.mfcc"))) == 6
    src = next(corpus.iterdir())
    assert main(["stylize", str(src), "--style", "1", "--out", str(tmp_path / "sty")]) == 0
    assert len(list((tmp_path / "sty").glob("*_style1.wav"))) == 3


def test_stylize_files_manifest_idempotent_and_pitch(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i in range(10):
        write_wav(sine(220 + 20 * i, 0.5), src / f"f{i}.wav")
    n, errors = stylize_files(src, 1, tmp_path / "out")
    assert n == 10 and not errors
    rows = read_rows(tmp_path / "out" / "manifest.csv")
    assert len(rows) == 10 and all(len(r["output_sha256"]) == 64 for r in rows)
    before = (tmp_path / "out" / "manifest.csv").read_bytes()
    stylize_files(src, 1, tmp_path / "out")
    assert (tmp_path / "out" / "manifest.csv").read_bytes() == before

    stylize_files(src, 0, tmp_path / "p")
    y = read_wav(tmp_path / "p" / "f0_style0.wav").samples
    assert abs(peak_frequency(y) - 220 * 2 ** (10 / 12)) <= 16000 / 4096


def test_stylize_files_continues_after_bad_file(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    write_wav(sine(440, 0.2), src / "good.wav")
    (src / "broken.wav").write_bytes(b"RIFF....WAVE")
    n, errors = stylize_files(src, 2, tmp_path / "out")
    assert n == 1 and errors[0][0] == "broken.wav"
    assert main(["stylize", str(src), "--style", "2", "--out", str(tmp_path / "o2")]) == 2


def test_aggregate_orders_levels_numerically():
    rows = [dict(style=s, level=lv, asr=a, clean_drop_pp=0.0)
            for s, lv, a in [("2", "10.0", 0.5), ("2", "2.0", 0.1), ("2", "2.0", 0.3), ("5", "4.0", 1.0)]]
    out = aggregate(rows, ("style", "level"))
    assert [(r["style"], r["level"]) for r in out] == [("2", "2.0"), ("2", "10.0"), ("5", "4.0")]
    assert out[0]["n"] == 2 and out[0]["asr_mean"] == pytest.approx(0.2)
    assert out[0]["asr_std"] == pytest.approx(0.1)
