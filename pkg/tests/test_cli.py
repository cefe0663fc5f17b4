"""Command-line interface: exit codes, config precedence, artifact layout,
and byte-level reproducibility of outputs."""

import json
from pathlib import Path

import numpy as np
import pytest

from egalab import trainer
from egalab.cli import main
from egalab.data import synthetic_text


def run_cli(argv):
    """Invoke main() in process, normalizing SystemExit to a return code."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "prose.txt"
    p.write_text(synthetic_text(20_000, seed=0))
    return p


@pytest.fixture(scope="module")
def probe(corpus_file):
    return corpus_file.read_text()[:16]   # fits the tiny run's context


TINY = ["--layers", "1", "--heads", "2", "--dim", "8", "--dropout", "0.0",
        "--context", "16", "--batch", "2", "--eval-every", "3",
        "--eval-batches", "2", "--snapshot-every", "3", "--quiet"]


def train_args(corpus_file, out, extra=()):
    return (["train", "--data-path", str(corpus_file), "--steps", "6",
             "--seed", "3", "--out", str(out)] + TINY + list(extra))


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, corpus_file):
    out = tmp_path_factory.mktemp("cli") / "run_ega1"
    code = run_cli(train_args(corpus_file, out, extra=["--variant", "ega1"]))
    assert code == 0
    return out


# -- exit codes ---------------------------------------------------------------

def test_no_command_is_usage_error():
    assert run_cli([]) == 1


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "train" in capsys.readouterr().out


def test_unknown_variant_exits_one_and_lists_choices(capsys):
    code = run_cli(["train", "--variant", "ega9"])
    assert code == 1
    err = capsys.readouterr().err
    assert "ega9" in err and "egadb2" in err   # choices surfaced to the user


def test_missing_run_dir_exits_one(tmp_path, capsys):
    assert run_cli(["analyze", "tau", "--run", str(tmp_path / "none")]) == 1
    assert "missing" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_two(corpus_file, capsys):
    code = run_cli(["train", "--data-path", str(corpus_file), "--steps", "4",
                    "--lr", "1e6", "--seed", "0"] + TINY)
    assert code == 2
    assert "diverged" in capsys.readouterr().err


def test_missing_dataset_file_exits_one(capsys, monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)    # no data/ directory here
    code = run_cli(["train", "--dataset", "shakespeare", "--steps", "4"] + TINY)
    assert code == 1
    assert "fetch_datasets" in capsys.readouterr().err


# -- train artifacts -------------------------------------------------------------

def test_train_writes_run_directory(trained_run, corpus_file):
    names = {p.name for p in trained_run.iterdir()}
    assert {"config.json", "metrics.csv", "gates.csv", "checkpoint.bin"} <= names
    manifest = json.loads((trained_run / "config.json").read_text())
    assert manifest["model_config"]["gate_variant"] == "ega1"
    assert manifest["dataset"] == "prose"          # file stem
    assert manifest["train_config"]["steps"] == 6
    assert manifest["param_count"] > 0
    assert manifest["gate_param_count"] > 0
    assert len(manifest["batch_fingerprint"]) == 16
    metrics = trainer.read_csv(trained_run / "metrics.csv")
    assert len(metrics) == 6


def test_train_prints_summary(corpus_file, tmp_path, capsys):
    code = run_cli(train_args(corpus_file, tmp_path / "r"))
    assert code == 0
    out = capsys.readouterr().out
    assert "final: train" in out and "batches" in out


# -- config file and precedence -----------------------------------------------------

def test_config_file_precedence(corpus_file, tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("steps = 4\nseed = 5\n# comment\nvariant = egadb2\n")
    out = tmp_path / "run"
    code = run_cli(["train", "--data-path", str(corpus_file),
                    "--config", str(cfg), "--steps", "6", "--out", str(out)] + TINY)
    assert code == 0
    manifest = json.loads((out / "config.json").read_text())
    assert manifest["train_config"]["steps"] == 6      # flag beats file
    assert manifest["train_config"]["seed"] == 5       # file beats default
    assert manifest["model_config"]["gate_variant"] == "egadb2"


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("stepz = 4\n")
    assert run_cli(["train", "--config", str(cfg)]) == 1
    assert "stepz" in capsys.readouterr().err


def test_config_file_bad_syntax(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just some words\n")
    assert run_cli(["train", "--config", str(cfg)]) == 1
    assert "key = value" in capsys.readouterr().err


def test_config_file_missing(tmp_path):
    assert run_cli(["train", "--config", str(tmp_path / "none.cfg")]) == 1


# -- reproducibility ------------------------------------------------------------------

def drop_wall_ms(text: str) -> str:
    lines = text.splitlines()
    cols = lines[0].split(",")
    keep = [i for i, c in enumerate(cols) if c != "wall_ms"]
    return "\n".join(",".join(line.split(",")[i] for i in keep) for line in lines)


def test_rerun_is_byte_identical_except_timing(corpus_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(train_args(corpus_file, a)) == 0
    assert run_cli(train_args(corpus_file, b)) == 0
    assert (a / "config.json").read_bytes() == (b / "config.json").read_bytes()
    assert (a / "gates.csv").read_bytes() == (b / "gates.csv").read_bytes()
    assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()
    ma = drop_wall_ms((a / "metrics.csv").read_text())
    mb = drop_wall_ms((b / "metrics.csv").read_text())
    assert ma == mb
    assert (a / "metrics.csv").read_text() != mb   # wall_ms really is there


# -- ablate ----------------------------------------------------------------------------

def test_ablate_dedupes_and_writes_summary(corpus_file, tmp_path, capsys):
    out = tmp_path / "ab"
    code = run_cli(["ablate", "--variants", "base,egadb2,base",
                    "--data-path", str(corpus_file), "--steps", "4",
                    "--seed", "3", "--out", str(out)] + TINY)
    assert code == 0
    captured = capsys.readouterr()
    assert "duplicate variant 'base' dropped" in captured.err
    rows = trainer.read_csv(out / "ablation.csv")
    assert [r["variant"] for r in rows] == ["base", "egadb2"]
    assert rows[0]["delta"] == pytest.approx(0.0)
    assert rows[0]["extra_params"] == 0
    assert rows[1]["extra_params"] > 0
    assert "shared batches" in captured.out
    assert (out / "base" / "checkpoint.bin").is_file()
    assert (out / "egadb2" / "checkpoint.bin").is_file()


def test_ablate_requires_out(corpus_file, capsys):
    code = run_cli(["ablate", "--variants", "base",
                    "--data-path", str(corpus_file), "--steps", "4"] + TINY)
    assert code == 1
    assert "--out" in capsys.readouterr().err


def test_ablate_rejects_unknown_variant(corpus_file, tmp_path, capsys):
    code = run_cli(["ablate", "--variants", "base,nope", "--out",
                    str(tmp_path / "x"), "--data-path", str(corpus_file)] + TINY)
    assert code == 1
    assert "nope" in capsys.readouterr().err


# -- analyze -----------------------------------------------------------------------------

def test_analyze_tau_artifacts(trained_run, capsys):
    code = run_cli(["analyze", "tau", "--run", str(trained_run)])
    assert code == 0
    out = capsys.readouterr().out
    assert "mean final tau" in out
    assert "1-Phi" in out
    stem = "tau_ega1_prose_s3"
    traj = trained_run / f"{stem}_trajectory.csv"
    final = trained_run / f"{stem}_final.csv"
    assert traj.is_file() and final.is_file()
    rows = trainer.read_csv(traj)
    assert [r["step"] for r in rows] == [0, 3, 6]
    finals = trainer.read_csv(final)
    assert {tuple(sorted(r)) for r in finals} == {("head", "layer", "scale", "tau")}


def test_analyze_scalogram_and_spectrum(trained_run, probe, tmp_path, capsys):
    out = tmp_path / "art"
    for kind in ("scalogram", "spectrum"):
        code = run_cli(["analyze", kind, "--run", str(trained_run),
                        "--probe", probe, "--layer", "1", "--out", str(out)])
        assert code == 0
        stem = f"{kind}_ega1_prose_s3_L1"
        assert (out / f"{stem}.csv").is_file()
        assert (out / f"{stem}.svg").is_file()
    text = capsys.readouterr().out
    assert "scalogram [64 scales x" in text
    assert "peak at scale" in text


def test_analyze_scalogram_bad_layer(trained_run, probe, capsys):
    code = run_cli(["analyze", "scalogram", "--run", str(trained_run),
                    "--probe", probe, "--layer", "9"])
    assert code == 1
    assert "layer must be in" in capsys.readouterr().err


def test_analyze_compare(trained_run, corpus_file, tmp_path, capsys):
    other = tmp_path / "base_run"
    assert run_cli(train_args(corpus_file, other)) == 0
    code = run_cli(["analyze", "compare", "--base", str(other),
                    "--other", str(trained_run)])
    assert code == 0
    out = capsys.readouterr().out
    assert "delta = " in out and "gap" in out


def test_analyze_compare_different_seeds_refused(trained_run, corpus_file,
                                                 tmp_path, capsys):
    other = tmp_path / "seed9"
    args = train_args(corpus_file, other)
    args[args.index("--seed") + 1] = "9"
    assert run_cli(args) == 0
    code = run_cli(["analyze", "compare", "--base", str(other),
                    "--other", str(trained_run)])
    assert code == 1
    assert "fingerprints differ" in capsys.readouterr().err


def test_analyze_seqlen_table(corpus_file, tmp_path, capsys):
    out = tmp_path / "seq"
    code = run_cli(["analyze", "seqlen", "--lengths", "8,16",
                    "--data-path", str(corpus_file), "--steps", "2",
                    "--layers", "1", "--heads", "2", "--dim", "8",
                    "--dropout", "0.0", "--eval-every", "2",
                    "--eval-batches", "1", "--snapshot-every", "2",
                    "--seed", "2", "--quiet", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "val_base" in text and "val_ega1" in text
    rows = trainer.read_csv(out / "seqlen.csv")
    assert [r["T"] for r in rows] == [8, 16]
    assert rows[0]["B"] == 2048


# -- plot ------------------------------------------------------------------------------

def test_plot_default_name_and_byte_identical_rerun(trained_run, tmp_path):
    code = run_cli(["plot", str(trained_run)])
    assert code == 0
    default = trained_run / "curves_ega1.svg"
    assert default.is_file()
    first = default.read_bytes()
    out2 = tmp_path / "again.svg"
    assert run_cli(["plot", str(trained_run), "--out", str(out2)]) == 0
    assert out2.read_bytes() == first
    assert b"<svg" in first


def test_plot_multiple_runs(trained_run, corpus_file, tmp_path):
    other = tmp_path / "base_run"
    assert run_cli(train_args(corpus_file, other)) == 0
    out = tmp_path / "multi.svg"
    code = run_cli(["plot", str(other), str(trained_run), "--out", str(out)])
    assert code == 0
    body = out.read_text()
    assert "base (prose, s3)" in body or "base" in body
