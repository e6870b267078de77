"""End-to-end command-line flows on tiny benchmarks."""

import json

import numpy as np
import pytest

from dcm.cli import main
from dcm.datagen import default_spec, gen_standard_ood, write_dataset_csv
from dcm.netcore import load_checkpoint
from dcm.scoring import SCORE_CSV_HEADER

SMALL = """
mode = ood
benchmark.kind = standard
benchmark.n_train = 60
benchmark.n_val = 40
benchmark.n_uncertainty = 48
benchmark.n_test = 60
dcm.pretrain_epochs = 10
dcm.finetune_epochs = 2
model.hidden_dims = 8
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return str(path)


def test_pretrain_writes_checkpoint_and_manifest(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["pretrain", "--config", cfg_path, "--out", str(out)]) == 0
    assert (out / "pretrained.ckpt").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["per_epoch_loss"]) == 10
    assert manifest["backend"] in ("compiled", "python")
    assert manifest["config"]["mode"] == "ood"
    assert "checkpoint" in capsys.readouterr().out


def test_pretrain_seed_determinism(cfg_path, tmp_path):
    outs = []
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        out = tmp_path / name
        assert main(["pretrain", "--config", cfg_path, "--out", str(out), "--seed", str(seed)]) == 0
        outs.append((out / "pretrained.ckpt").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_finetune_ood_from_checkpoint(cfg_path, tmp_path):
    pre = tmp_path / "pre"
    assert main(["pretrain", "--config", cfg_path, "--out", str(pre)]) == 0
    ft = tmp_path / "ft"
    assert main([
        "finetune-ood", "--config", cfg_path, "--out", str(ft),
        "--checkpoint", str(pre / "pretrained.ckpt"),
    ]) == 0
    tuned = load_checkpoint(ft / "finetuned.ckpt")
    base = load_checkpoint(pre / "pretrained.ckpt")
    assert not tuned.params_equal(base)


def test_score_and_evaluate_chain(cfg_path, tmp_path, capsys):
    pre = tmp_path / "pre"
    main(["pretrain", "--config", cfg_path, "--out", str(pre)])
    sc = tmp_path / "scores"
    assert main([
        "score", "--config", cfg_path, "--out", str(sc),
        "--checkpoint", str(pre / "pretrained.ckpt"),
    ]) == 0
    lines = (sc / "scores.csv").read_text().splitlines()
    assert lines[0] == SCORE_CSV_HEADER
    assert len(lines) == 1 + 60 * 3  # three score kinds over the test split

    ev = tmp_path / "eval"
    assert main(["evaluate", "--scores", str(sc / "scores.csv"), "--out", str(ev)]) == 0
    report_lines = (ev / "report.csv").read_text().splitlines()
    assert report_lines[0].startswith("score_kind,auroc,")
    kinds = [ln.split(",")[0] for ln in report_lines[1:]]
    assert kinds == ["energy", "maxlogit", "msp"]
    for ln in report_lines[1:]:
        assert ln.split(",")[1] != ""  # auroc populated on a mixed split
    blob = json.loads((ev / "report.json").read_text())
    assert set(blob) == {"energy", "maxlogit", "msp"}


def test_score_external_dataset_and_bad_split(cfg_path, tmp_path, capsys):
    pre = tmp_path / "pre"
    main(["pretrain", "--config", cfg_path, "--out", str(pre)])
    data_csv = tmp_path / "data.csv"
    splits = gen_standard_ood(default_spec("standard", seed=1))
    write_dataset_csv(data_csv, splits["val"].subset(np.arange(20)))
    out = tmp_path / "s2"
    assert main([
        "score", "--config", cfg_path, "--out", str(out),
        "--checkpoint", str(pre / "pretrained.ckpt"), "--data", str(data_csv),
    ]) == 0
    assert len((out / "scores.csv").read_text().splitlines()) == 1 + 20 * 3

    rc = main([
        "score", "--config", cfg_path, "--out", str(out),
        "--checkpoint", str(pre / "pretrained.ckpt"), "--split", "nonesuch",
    ])
    assert rc == 2
    assert "nonesuch" in capsys.readouterr().err


def test_finetune_sc_warns_when_val_is_perfect(tmp_path, capsys):
    cfg = tmp_path / "easy.cfg"
    cfg.write_text(
        SMALL.replace("dcm.pretrain_epochs = 10", "dcm.pretrain_epochs = 60")
        + "benchmark.class_separation = 12\nbenchmark.ood_offset = 24\n"
    )
    out = tmp_path / "sc"
    assert main(["finetune-sc", "--config", str(cfg), "--out", str(out)]) == 0
    assert "EmptyErrorSetWarning" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["warnings"]


def test_experiment_cmd(cfg_path, tmp_path, capsys):
    out = tmp_path / "exp"
    assert main(["experiment", "--config", cfg_path, "--out", str(out)]) == 0
    assert (out / "results.csv").exists()
    assert (out / "manifest.json").exists()
    stdout = capsys.readouterr().out
    assert "auroc baseline/msp" in stdout
    assert "auroc dcm/msp" in stdout


def test_theory_check_cmd(tmp_path, capsys):
    cfg = tmp_path / "theory.cfg"
    cfg.write_text(
        "mode = theory\n"
        "benchmark.kind = standard\n"
        "benchmark.unc_id_from_train = true\n"
        "benchmark.n_uncertainty = 480\n"
        "dcm.finetune_epochs = 60\n"
        "model.hidden_dims = 64\n"
        "model.activation = tanh\n"
        "n_seeds = 1\n"
    )
    out = tmp_path / "theory"
    assert main(["theory-check", "--config", str(cfg), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "pinsker inequality on 1000 random pairs: 0 violations" in stdout
    assert "closed-form optimum vs gradient descent" in stdout
    assert "test-set MSP separation in 1/1 seeds" in stdout
    assert "theory checks passed" in stdout
    assert (out / "manifest.json").exists()


def test_missing_flags_exit_2(cfg_path, tmp_path, capsys):
    assert main(["pretrain", "--out", str(tmp_path / "x")]) == 2
    assert "--config is required" in capsys.readouterr().err
    assert main(["pretrain", "--config", cfg_path]) == 2
    assert "--out is required" in capsys.readouterr().err
    assert main(["pretrain", "--config", str(tmp_path / "ghost.cfg"), "--out", str(tmp_path / "x")]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["evaluate", "--out", str(tmp_path / "x")]) == 2
    assert "--scores is required" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["dance"])
